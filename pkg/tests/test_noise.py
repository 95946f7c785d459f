import numpy as np
import pytest

from seirident.noise import (NoiseSpec, add_noise, generate_replicates,
                             replicate_rng, replicates_to_csv)
from seirident.observe import DataType, Frequency, build_case, clean_case_series


@pytest.fixture(scope="module")
def case():
    return build_case(1, DataType.PREVALENCE, Frequency.DAILY)


@pytest.fixture(scope="module")
def clean(case):
    return clean_case_series(case)


def test_sigma_zero_is_identity(case, clean):
    rng = np.random.default_rng(0)
    out = add_noise(clean, NoiseSpec(0.0), rng)
    np.testing.assert_array_equal(out.values, clean.values)
    assert out.noise_level == 0.0

    reps = generate_replicates(case, NoiseSpec(0.0), 20, seed=5)
    assert np.all(reps.values == clean.values)


def test_add_noise_requires_clean_input(case, clean):
    noisy = add_noise(clean, NoiseSpec(0.1), np.random.default_rng(1))
    with pytest.raises(ValueError):
        add_noise(noisy, NoiseSpec(0.1), np.random.default_rng(1))


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)


def test_noise_moments(case, clean):
    # statistical oracle: the multiplier y/g is 1 + eps with eps ~ N(0, sigma)
    sigma = 0.3
    m = 28  # 28 * 365 = 10220 draws
    reps = generate_replicates(case, NoiseSpec(sigma), m, seed=99)
    ratios = (reps.values / clean.values).ravel()
    n = ratios.size
    assert n >= 10000
    assert abs(ratios.mean() - 1.0) < sigma * 3.0 / np.sqrt(10000)
    assert abs(ratios.std(ddof=1) - sigma) < 0.05 * sigma


def test_noise_independent_across_points(case, clean):
    reps = generate_replicates(case, NoiseSpec(0.3), 28, seed=123)
    eps = (reps.values / clean.values - 1.0).ravel()
    x, y = eps[:-1], eps[1:]
    rho = np.corrcoef(x, y)[0, 1]
    assert abs(rho) < 0.05


def test_negative_values_are_kept():
    case = build_case(1, DataType.INCIDENCE, Frequency.DAILY)
    reps = generate_replicates(case, NoiseSpec(0.3), 10, seed=7)
    # the incidence tail is small enough that 30% noise crosses zero
    assert np.any(reps.values < 0.0)


def test_determinism_and_seed_sensitivity(case):
    a = generate_replicates(case, NoiseSpec(0.2), 12, seed=42)
    b = generate_replicates(case, NoiseSpec(0.2), 12, seed=42)
    np.testing.assert_array_equal(a.values, b.values)
    c = generate_replicates(case, NoiseSpec(0.2), 12, seed=43)
    assert a.values[0, 0] != c.values[0, 0]


def test_replicate_regenerable_in_isolation(case, clean):
    reps = generate_replicates(case, NoiseSpec(0.2), 8, seed=42)
    j = 5
    eps = 0.2 * replicate_rng(case, 42, j).standard_normal(case.schedule.n)
    np.testing.assert_array_equal(reps.values[j], clean.values * (1.0 + eps))


@pytest.mark.parametrize("dt", list(DataType))
def test_child_replicates_are_truncations(dt):
    parent = build_case(1, dt, Frequency.WEEKLY)
    child = build_case(3, dt, Frequency.WEEKLY)
    pr = generate_replicates(parent, NoiseSpec(0.3), 6, seed=11)
    cr = generate_replicates(child, NoiseSpec(0.3), 6, seed=11)
    np.testing.assert_array_equal(cr.values, pr.values[:, :child.schedule.n])


def test_accumulated_cumulative_noise_mode():
    case = build_case(2, DataType.CUMULATIVE, Frequency.DAILY)
    inc_case = build_case(2, DataType.INCIDENCE, Frequency.DAILY)
    reps = generate_replicates(case, NoiseSpec(0.1), 4, seed=3, accumulate_cumulative=True)
    inc_clean = clean_case_series(inc_case).values
    j = 2
    eps = 0.1 * replicate_rng(case, 3, j).standard_normal(case.schedule.n)
    expected = case.scenario.init.C + np.cumsum(inc_clean * (1.0 + eps))
    np.testing.assert_array_equal(reps.values[j], expected)
    # cumulative errors are serially dependent but start from the same clean curve
    clean_cum = clean_case_series(case).values
    assert np.max(np.abs(reps.values.mean(axis=0) - clean_cum)) < 0.15 * clean_cum[-1]


def test_replicates_to_csv(tmp_path):
    case = build_case(4, DataType.PREVALENCE, Frequency.DAILY)
    reps = generate_replicates(case, NoiseSpec(0.05), 3, seed=1)
    path = tmp_path / "reps.csv"
    replicates_to_csv(reps, path, header_lines=("seed=1",))
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=1"
    assert lines[1] == "replicate,time,value"
    assert len(lines) == 2 + 3 * case.schedule.n
    first = lines[2].split(",")
    assert first[0] == "0" and float(first[1]) == 1.0
    assert float(first[2]) == reps.values[0, 0]


def test_m_validation(case):
    with pytest.raises(ValueError):
        generate_replicates(case, NoiseSpec(0.1), 0, seed=1)
