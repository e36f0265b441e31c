# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled collapsed-sampler kernel.

Must stay operation-for-operation identical to _collapsed_py.py so the
compiled and fallback paths produce bitwise identical chains.
"""


def resample_cycle(int[::1] assign, int[::1] token_word, int[::1] token_doc,
                   long long[:, ::1] doc_c, long long[:, ::1] word_totals,
                   long long[:, ::1] group_totals, double[::1] gamma,
                   double[::1] gamma_sum, int[::1] group_of_word,
                   double[::1] alpha, double[::1] inv_b,
                   double[::1] zero_factor, double[::1] uniforms,
                   double[::1] weight_buf):
    """Resample every token once, in order, updating counts in place.

    Returns 0 on success or 1+t if token t saw no positive weight.
    """
    cdef Py_ssize_t num_tokens = assign.shape[0]
    cdef Py_ssize_t num_components = alpha.shape[0]
    cdef Py_ssize_t t, k, j, i, g, k_old, chosen, fallback
    cdef long long ck
    cdef double total, u, acc, w, s
    for t in range(num_tokens):
        j = token_word[t]
        i = token_doc[t]
        g = group_of_word[j]
        k_old = assign[t]
        doc_c[i, k_old] -= 1
        word_totals[j, k_old] -= 1
        group_totals[g, k_old] -= 1
        total = 0.0
        for k in range(num_components):
            ck = doc_c[i, k]
            if ck == 0:
                s = zero_factor[k]
            else:
                s = (ck + alpha[k]) * inv_b[k]
            w = (gamma[j] + word_totals[j, k]) / (gamma_sum[g] + group_totals[g, k]) * s
            weight_buf[k] = w
            total += w
        if not total > 0.0:
            return t + 1
        u = uniforms[t] * total
        acc = 0.0
        chosen = -1
        fallback = 0
        for k in range(num_components):
            w = weight_buf[k]
            if w > 0.0:
                fallback = k
                acc += w
                if u < acc:
                    chosen = k
                    break
        if chosen < 0:
            chosen = fallback
        doc_c[i, chosen] += 1
        word_totals[j, chosen] += 1
        group_totals[g, chosen] += 1
        assign[t] = chosen
    return 0
