import numpy as np

from swiglab.rng import row_range, stream_key, uniforms


def test_unit_interval_and_rough_uniformity():
    u = uniforms(7, "Y", row_range(0, 200_000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / len(u))
    counts = np.histogram(u, bins=20, range=(0, 1))[0]
    expected = len(u) / 20
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 50  # 19 dof; the 0.9999 quantile is about 48


def test_values_depend_only_on_key():
    rows = row_range(0, 1000)
    whole = uniforms(3, "Z", rows)
    parts = np.concatenate([uniforms(3, "Z", rows[:123]), uniforms(3, "Z", rows[123:])])
    assert np.array_equal(whole, parts)
    shuffled = rows[::-1]
    assert np.array_equal(uniforms(3, "Z", shuffled), whole[::-1])


def test_streams_differ_by_seed_and_name():
    rows = row_range(0, 1000)
    a = uniforms(1, "A", rows)
    assert not np.array_equal(a, uniforms(2, "A", rows))
    assert not np.array_equal(a, uniforms(1, "Y", rows))
    assert abs(np.corrcoef(a, uniforms(1, "Y", rows))[0, 1]) < 0.15
    assert stream_key(1, "A") == stream_key(1, "A")
    assert stream_key(1, "A") != stream_key(1 + 2**64, "B")


def test_large_seeds_wrap():
    rows = row_range(10, 20)
    assert np.array_equal(uniforms(5, "X", rows), uniforms(5 + 2**64, "X", rows))
