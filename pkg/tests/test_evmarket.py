import numpy as np
import pytest

from ddsaddle.diagnostics import fit_subweibull
from ddsaddle.evmarket import (DemandSeries, EvParams, build_problem, closed_form_references,
                               load_demand_csv, save_demand_csv, standardize, synth_demand)
from ddsaddle.geometry import DimensionError
from ddsaddle.problem import BootstrapBase, GaussianBase


def test_default_constants():
    c = build_problem(EvParams()).constants
    assert (c.gamma, c.lip_l, c.lip_z, c.lip_w) == (2.0, 2.0, 2.0, 1.0)
    assert c.eps == pytest.approx(0.6, abs=1e-9)
    assert c.mono_full == pytest.approx(2.6, abs=1e-12)
    assert c.ratio == pytest.approx(0.6, abs=1e-9)


def test_default_dependence_matrix():
    b = EvParams().b_mat
    eye = np.eye(3)
    np.testing.assert_array_equal(b, 0.3 * np.block([[-eye, eye], [eye, -eye]]))


def test_params_validation():
    with pytest.raises(ValueError):
        EvParams(gamma1=[1.0, 0.0, 1.0])
    with pytest.raises(DimensionError):
        EvParams(a1=np.eye(2))
    with pytest.raises(ValueError):
        EvParams(price_lo=0.5)
    with pytest.raises(ValueError):
        EvParams(n_zones=0)


def _numeric_full_grad(problem, z, h=1e-6):
    # full objective of the quadratic model: φ(z, mean of D(z)) since φ is affine in w
    phi = lambda v: float(problem.payoff(v, problem.dist_map.mean(v)))
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (phi(z + e) - phi(z - e)) / (2 * h)
    n = problem.n_x
    g[n:] *= -1
    return g


def test_full_grad_matches_finite_differences():
    p = EvParams(mu_a=[0.2, 1.0, -0.4], mu_b=0.3, theta=[0.1, 0.0, 0.2],
                 gamma1=[1.0, 1.2, 0.9], a1=np.array([[-0.3, 0.1, 0], [0, -0.2, 0], [0.05, 0, -0.3]]))
    prob = build_problem(p)
    z = np.random.default_rng(0).uniform(-1, 2, 6)
    np.testing.assert_allclose(prob.full_grad(z), _numeric_full_grad(prob, z), atol=1e-6)


def test_references_unit_demand_shift():
    refs = closed_form_references(EvParams(mu_a=1.0))
    np.testing.assert_allclose(refs.z_bar, [2.3 / 5.2] * 3 + [0.3 / 5.2] * 3, atol=1e-12)
    np.testing.assert_allclose(refs.z_star, [1 / 2.6] * 3 + [0.0] * 3, atol=1e-12)
    assert np.linalg.norm(refs.z_star - refs.z_bar) == pytest.approx(0.1413167, abs=1e-6)
    assert not refs.clamped


def test_references_solve_their_systems():
    p = EvParams(mu_a=[0.3, -0.2, 0.8], mu_b=[0.1, 0.5, -0.3], theta=0.2)
    prob = build_problem(p)
    refs = closed_form_references(p)
    np.testing.assert_allclose(prob.decoupled_grad(refs.z_bar, refs.z_bar), 0, atol=1e-12)
    np.testing.assert_allclose(prob.full_grad(refs.z_star), 0, atol=1e-12)


def test_references_clamped_by_box():
    refs = closed_form_references(EvParams(mu_a=10.0))
    assert refs.clamped
    np.testing.assert_allclose(refs.z_bar, [2.0] * 3 + [0.6 / 2.3] * 3, atol=1e-9)
    np.testing.assert_allclose(refs.z_star, [2.0] * 3 + [0.0] * 3, atol=1e-9)


def test_zero_mean_references_at_origin():
    refs = closed_form_references()
    assert np.all(refs.z_bar == 0) and np.all(refs.z_star == 0)


# -- demand data -----------------------------------------------------------------------

def test_standardize():
    raw = np.array([[1.0, 10.0], [3.0, 14.0], [5.0, 12.0]])
    np.testing.assert_allclose(standardize(raw, "var"), [[-0.5, -0.5], [0, 0.5], [0.5, 0]])
    s = standardize(raw, "std")
    np.testing.assert_allclose(s.std(axis=0, ddof=1), 1.0)
    with pytest.raises(ValueError, match="zero variance"):
        standardize(np.c_[raw[:, 0], np.ones(3)])
    with pytest.raises(ValueError):
        standardize(raw, "minmax")


def test_synth_demand_deterministic_and_metadata():
    a, b = synth_demand(seed=4), synth_demand(seed=4)
    assert a == b and a.metadata == b.metadata
    assert a != synth_demand(seed=5)
    assert a.values.shape == (365, 6)
    assert np.max(np.abs(a.raw)) <= 5.0
    assert set(a.metadata["hardware"]) == set(a.station_ids)
    np.testing.assert_allclose(a.values.mean(axis=0), 0, atol=1e-12)
    with pytest.raises(ValueError):
        synth_demand(n_days=29)


def test_csv_round_trip(tmp_path):
    series = synth_demand(n_days=40, seed=1)
    path = tmp_path / "demand.csv"
    save_demand_csv(series, path)
    back = load_demand_csv(path)
    assert back == series
    assert back.provenance == "csv"


def test_csv_hour_filter_and_averaging(tmp_path):
    path = tmp_path / "d.csv"
    rows = ["day,hour,station_id,demand_kwh"]
    for d in range(30):
        for sid in ("s2", "s1"):
            rows.append(f"{d},12,{sid},{d + (sid == 's1')}")
            rows.append(f"{d},12,{sid},{d + 2}")
            rows.append(f"{d},7,{sid},1000")
    path.write_text("\n".join(rows) + "\n")
    s = load_demand_csv(path)
    assert s.station_ids == ["s1", "s2"]
    np.testing.assert_allclose(s.raw[:, 0], np.arange(30) + 1.5)
    np.testing.assert_allclose(s.raw[:, 1], np.arange(30) + 1.0)


def test_csv_errors(tmp_path):
    short = synth_demand(n_days=30, seed=2)
    path = tmp_path / "short.csv"
    save_demand_csv(short, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-6]) + "\n")  # drop the last day
    with pytest.raises(ValueError, match="30"):
        load_demand_csv(path)
    flat = tmp_path / "flat.csv"
    flat.write_text("day,hour,station_id,demand_kwh\n"
                    + "".join(f"{d},12,s,5\n" for d in range(30)))
    with pytest.raises(ValueError, match="zero variance"):
        load_demand_csv(flat)
    bad = tmp_path / "bad.csv"
    bad.write_text("day,station_id,demand_kwh\n0,s,1\n")
    with pytest.raises(ValueError, match="missing"):
        load_demand_csv(bad)
    with pytest.raises(ValueError, match="no rows"):
        load_demand_csv(path, hour=3)


def test_build_problem_with_demand():
    series = synth_demand(seed=3)
    prob = build_problem(EvParams(), series)
    assert isinstance(prob.dist_map.base, BootstrapBase)
    assert isinstance(build_problem().dist_map.base, GaussianBase)
    with pytest.raises(DimensionError):
        build_problem(EvParams(), synth_demand(n_zones=2))


def test_long_synthetic_series_tail_and_mean():
    s = synth_demand(n_days=100_000, seed=11, standardize_how="std")
    v = s.values[:, 0]
    assert 0.4 <= fit_subweibull(v).theta_hat <= 0.65
    r = s.raw[:, 0]
    assert abs(r.mean()) <= 3 * r.std(ddof=1) / np.sqrt(r.size)
    assert isinstance(s, DemandSeries)
