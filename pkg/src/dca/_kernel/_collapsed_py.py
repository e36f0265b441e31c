"""Pure-Python collapsed-sampler kernel.

Mirrors _collapsed_c.pyx operation for operation so both produce bitwise
identical chains from the same uniforms; keep the two in sync.
"""


def resample_cycle(assign, token_word, token_doc, doc_c, word_totals,
                   group_totals, gamma, gamma_sum, group_of_word, alpha,
                   inv_b, zero_factor, uniforms, weight_buf):
    """Resample every token once, in order, updating counts in place.

    Returns 0 on success or 1+t if token t saw no positive weight.
    """
    num_tokens = assign.shape[0]
    num_components = alpha.shape[0]
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
