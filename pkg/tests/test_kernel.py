"""Compiled and pure-Python kernels must produce bitwise identical chains."""

import numpy as np
import pytest

from dca._kernel import KERNEL, py_resample_cycle

try:
    from dca._kernel._collapsed_c import resample_cycle as c_resample_cycle
except ImportError:
    c_resample_cycle = None


def make_state(rng, num_docs=6, num_words=8, num_components=3, num_groups=1):
    lengths = rng.integers(1, 9, size=num_docs)
    token_doc = np.repeat(np.arange(num_docs, dtype=np.int32), lengths)
    token_word = rng.integers(0, num_words, size=lengths.sum()).astype(np.int32)
    assign = rng.integers(0, num_components, size=lengths.sum()).astype(np.int32)
    group_of_word = (
        np.zeros(num_words, dtype=np.int32)
        if num_groups == 1
        else rng.integers(0, num_groups, size=num_words).astype(np.int32)
    )
    doc_c = np.zeros((num_docs, num_components), dtype=np.int64)
    np.add.at(doc_c, (token_doc, assign), 1)
    word_totals = np.zeros((num_words, num_components), dtype=np.int64)
    np.add.at(word_totals, (token_word, assign), 1)
    group_totals = np.zeros((num_groups, num_components), dtype=np.int64)
    np.add.at(group_totals, (group_of_word[token_word], assign), 1)
    gamma = rng.uniform(0.2, 1.0, size=num_words)
    gamma_sum = np.zeros(num_groups)
    np.add.at(gamma_sum, group_of_word, gamma)
    alpha = rng.uniform(0.2, 2.0, size=num_components)
    inv_b = 1.0 / (1.0 + rng.uniform(0.2, 2.0, size=num_components))
    zero_factor = alpha * inv_b
    return dict(
        assign=assign, token_word=token_word, token_doc=token_doc, doc_c=doc_c,
        word_totals=word_totals, group_totals=group_totals, gamma=gamma,
        gamma_sum=gamma_sum, group_of_word=group_of_word, alpha=alpha,
        inv_b=inv_b, zero_factor=zero_factor,
    )


def run_kernel(kernel, state, uniforms):
    copies = {k: np.array(v, copy=True) for k, v in state.items()}
    buf = np.empty(len(state["alpha"]))
    status = kernel(
        copies["assign"], copies["token_word"], copies["token_doc"],
        copies["doc_c"], copies["word_totals"], copies["group_totals"],
        copies["gamma"], copies["gamma_sum"], copies["group_of_word"],
        copies["alpha"], copies["inv_b"], copies["zero_factor"],
        uniforms, buf,
    )
    return status, copies


@pytest.mark.skipif(c_resample_cycle is None, reason="compiled kernel not built")
@pytest.mark.parametrize("num_groups", [1, 3])
def test_compiled_matches_python_bitwise(num_groups):
    rng = np.random.default_rng(2024)
    for _ in range(5):
        state = make_state(rng, num_groups=num_groups)
        uniforms = rng.random(state["assign"].size)
        for _cycle in range(3):
            status_c, out_c = run_kernel(c_resample_cycle, state, uniforms)
            status_p, out_p = run_kernel(py_resample_cycle, state, uniforms)
            assert status_c == status_p == 0
            for key in ("assign", "doc_c", "word_totals", "group_totals"):
                np.testing.assert_array_equal(out_c[key], out_p[key])
            state = out_c
            uniforms = rng.random(state["assign"].size)


def test_kernel_flag_is_reported():
    assert KERNEL in ("compiled", "python")


def test_zero_total_weight_reports_token():
    # One document, one token, one component with alpha = 0: after the
    # decrement c is 0 and every weight vanishes.
    state = dict(
        assign=np.zeros(1, dtype=np.int32),
        token_word=np.zeros(1, dtype=np.int32),
        token_doc=np.zeros(1, dtype=np.int32),
        doc_c=np.ones((1, 1), dtype=np.int64),
        word_totals=np.ones((1, 1), dtype=np.int64),
        group_totals=np.ones((1, 1), dtype=np.int64),
        gamma=np.array([0.5]),
        gamma_sum=np.array([0.5]),
        group_of_word=np.zeros(1, dtype=np.int32),
        alpha=np.zeros(1),
        inv_b=np.array([0.5]),
        zero_factor=np.zeros(1),
    )
    status, _ = run_kernel(py_resample_cycle, state, np.array([0.3]))
    assert status == 1
    if c_resample_cycle is not None:
        status_c, _ = run_kernel(c_resample_cycle, state, np.array([0.3]))
        assert status_c == 1
