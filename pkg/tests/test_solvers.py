from __future__ import annotations

import math

import numpy as np
import pytest

from hovi.errors import ConfigError, SubproblemError
from hovi.geometry import PotentialSpec, bregman, lp_norm
from hovi.problems import linear_operator, make_problem
from hovi.solvers import (
    Algorithm,
    SolverConfig,
    lp_hoeg_lambda,
    nu_default,
    restricted_gap,
    run,
    run_eag,
    run_hoeg_plus_l2,
    run_lp_hoeg_plus,
    run_lp_homvi,
)
from hovi.subproblems import SubproblemSettings


def test_nu_defaults():
    assert nu_default("hoeg_plus_l2", 1) == 0.656
    assert nu_default("hoeg_plus_l2", 2) == pytest.approx(math.log2(2.56875), rel=1e-15)
    assert nu_default("hoeg_plus_l2", 2) == pytest.approx(1.36107, abs=1e-5)
    assert nu_default("lp_homvi", 1, 2.0) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ConfigError):
        nu_default("lp_hoeg_plus", 1, 3.0)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(algorithm="lp_hoeg_plus", s=2, p=4.0), "s\\+1 >= p"),
        (dict(algorithm="hoeg_plus_l2", p=3.0), "p = 2"),
        (dict(algorithm="eag", s=2), "s = 1"),
        (dict(algorithm="hoeg_plus_l2", L=0.0), "positive"),
        (dict(algorithm="newton"), "unknown algorithm"),
        (dict(algorithm="hoeg_plus_l2", lambda_rule="other"), "lambda_rule"),
        (dict(algorithm="hoeg_plus_l2", s=0), "positive integer"),
    ],
)
def test_config_invariants(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        SolverConfig(**kwargs)


def test_identity_contraction():
    op = linear_operator(np.eye(2))
    trace = run_hoeg_plus_l2(op, [1.0, 0.0], SolverConfig("hoeg_plus_l2", s=1, L=1.0, K=200))
    norms = np.array([r.norm_full for r in trace.records])
    assert np.all(np.diff(norms) < 0)
    # half step scales by 1 - 2^-nu, the full step by 1 - 2^-nu (1 - 2^-nu) / 2
    q = 1 - 2**-0.656
    np.testing.assert_allclose(norms[1:] / norms[:-1], 1 - 2**-0.656 * q / 2, rtol=1e-12)
    k = int(np.argmax(trace.half_norms < 1e-6))
    assert 100 < k <= 125


def test_stationary_start_stops(identity2):
    trace = run_hoeg_plus_l2(identity2, [0.0, 0.0], SolverConfig("hoeg_plus_l2", L=1.0, K=10))
    assert trace.stop_reason == "stationary"
    assert trace.iterations == 0
    np.testing.assert_array_equal(trace.output, [0.0, 0.0])


def test_target_stop(identity2):
    trace = run(identity2, [1.0, 0.0], SolverConfig("hoeg_plus_l2", L=1.0, K=1000, target_eps=1e-3))
    assert trace.stop_reason == "target"
    assert trace.half_norms[-1] <= 1e-3 < trace.half_norms[-2]


# F evaluated at a numerically exact root is ~1e-15, not 0
ROUNDOFF = 1e-13


def _half_bound_ok(trace, factor):
    s = trace.config.s
    for r in trace.records:
        bound = factor * trace.L / math.factorial(s) * r.displacement**s
        assert r.norm_half <= bound * (1 + 1e-6) + ROUNDOFF


@pytest.mark.parametrize("s", [1, 2])
def test_hoeg_half_step_bound_and_lambda(s):
    entry = make_problem("modified_forsaken")
    trace = run_hoeg_plus_l2(entry.oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=s, L=entry.declared_L(s), K=300))
    nu = trace.config.nu
    _half_bound_ok(trace, 2**nu + 1)
    for r in trace.records:
        assert r.lam > 0
        assert r.lam == pytest.approx(2**-nu * r.displacement ** (1 - s), rel=1e-12)
    best = int(np.argmin(trace.half_norms))
    np.testing.assert_array_equal(trace.output, trace.records[best].z_half)


def test_hoeg_modified_forsaken_converges():
    entry = make_problem("modified_forsaken")
    trace = run_hoeg_plus_l2(entry.oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=1, K=5000), box=entry.box)
    assert trace.best_norm <= 1e-3
    np.testing.assert_allclose(trace.output, entry.z_star, atol=1e-6)


@pytest.mark.parametrize("s, p", [(2, 2.0), (2, 3.0), (3, 3.0)])
def test_lp_hoeg_half_step_bound(s, p):
    entry = make_problem("modified_forsaken")
    trace = run_lp_hoeg_plus(entry.oracle, [0.5, 0.5],
                             SolverConfig("lp_hoeg_plus", s=s, p=p, L=entry.declared_L(s, p), K=100))
    nu = trace.config.nu
    _half_bound_ok(trace, (s + 1) * 2**nu + 1)
    for r in trace.records:
        assert r.lam == pytest.approx(lp_hoeg_lambda(s, p, nu, r.displacement), rel=1e-12)


def test_lp_hoeg_second_order_converges_to_hoeg_point():
    entry = make_problem("modified_forsaken")
    cfg = SolverConfig("lp_hoeg_plus", s=2, p=2.0, K=2000, target_eps=1e-10)
    trace = run_lp_hoeg_plus(entry.oracle, [0.5, 0.5], cfg, box=entry.box)
    ref = run_hoeg_plus_l2(entry.oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=2, K=2000, target_eps=1e-10),
                           box=entry.box)
    assert trace.best_norm <= 1e-3
    np.testing.assert_allclose(trace.output, ref.output, atol=1e-8)


def test_lp_first_order_p2_matches_hoeg_on_identity(identity2):
    a = run_lp_hoeg_plus(identity2, [1.0, 0.0], SolverConfig("lp_hoeg_plus", s=1, p=2.0, L=1.0, K=300))
    b = run_hoeg_plus_l2(identity2, [1.0, 0.0], SolverConfig("hoeg_plus_l2", s=1, L=1.0, K=300))
    assert a.best_norm < 1e-6 and b.best_norm < 1e-6


def test_lambda_proof_rule_is_selectable():
    assert lp_hoeg_lambda(2, 3.0, 0.2, 0.5, "box") != lp_hoeg_lambda(2, 3.0, 0.2, 0.5, "proof")
    entry = make_problem("modified_forsaken")
    trace = run_lp_hoeg_plus(entry.oracle, [0.5, 0.5],
                             SolverConfig("lp_hoeg_plus", s=2, p=3.0, K=20, lambda_rule="proof", L=200.0))
    assert trace.header["lambda_rule"] == "proof"


def test_homvi_identity_average():
    op = linear_operator(np.eye(2))
    trace = run_lp_homvi(op, [1.0, 0.0], SolverConfig("lp_homvi", s=1, p=2.0, L=1.0, K=200))
    assert trace.output_rule == "lambda_weighted_average"
    gaps = [restricted_gap(op, trace.records[k].average, [0.0, 0.0], 1.0, 2000, 0) for k in (10, 50, 200)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert np.linalg.norm(trace.output) < 0.05
    np.testing.assert_allclose(trace.output, trace.records[-1].average)


def test_homvi_lambda_from_bregman_displacement():
    entry = make_problem("bilinear")
    trace = run_lp_homvi(entry.oracle, [0.5, 0.5], SolverConfig("lp_homvi", s=2, p=3.0, L=2.0, K=30))
    h = PotentialSpec("lp_pow_p", 3.0)
    nu = trace.config.nu
    for r in trace.records:
        om = bregman(h, r.z_half, r.z)
        assert r.lam == pytest.approx(2**-nu * om ** (-(2 + 1 - 3.0) / 3.0), rel=1e-12)


def test_homvi_zero_operator(zero2):
    trace = run_lp_homvi(zero2, [0.4, 0.1], SolverConfig("lp_homvi", s=2, p=3.0, L=1.0, K=10))
    assert trace.stop_reason == "stationary"
    np.testing.assert_array_equal(trace.output, [0.4, 0.1])


def test_eag_examples(identity2, zero2):
    trace = run_eag(identity2, [1.0, 0.0], SolverConfig("eag", L=1.0, K=200))
    assert np.linalg.norm(trace.final_point) < 0.1
    assert trace.header["alpha"] == pytest.approx(1 / 8)
    still = run_eag(zero2, [0.3, 0.3], SolverConfig("eag", L=1.0, K=5))
    for r in still.records:
        np.testing.assert_array_equal(r.z, [0.3, 0.3])


def test_eag_worse_and_oscillating_on_modified_forsaken():
    entry = make_problem("modified_forsaken")
    hoeg = run(entry.oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=1, K=5000), box=entry.box)
    eag = run(entry.oracle, [0.5, 0.5], SolverConfig("eag", K=5000), box=entry.box)
    assert eag.best_norm > hoeg.best_norm
    assert np.any(np.diff(eag.half_norms) > 0)


def test_linear_monotone_half_norms_nonincreasing():
    entry = make_problem("linear_monotone")
    trace = run(entry.oracle, [0.5, -1.0], SolverConfig("hoeg_plus_l2", s=1, L=entry.declared_L(1), K=300))
    assert np.all(np.diff(trace.half_norms) <= 1e-15)


@pytest.mark.parametrize("algorithm, s, p", [("hoeg_plus_l2", 2, 2.0), ("lp_hoeg_plus", 2, 3.0),
                                             ("lp_homvi", 2, 3.0), ("eag", 1, 2.0)])
def test_determinism(algorithm, s, p):
    entry = make_problem("modified_forsaken")
    cfg = SolverConfig(algorithm, s=s, p=p, K=40)
    a = run(entry.oracle, [0.5, 0.5], cfg, box=entry.box)
    b = run(entry.oracle, [0.5, 0.5], cfg, box=entry.box)
    assert a.L == b.L
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.z_half, rb.z_half) and ra.lam == rb.lam


def test_subproblem_failure_reports_iteration():
    entry = make_problem("modified_forsaken")
    cfg = SolverConfig("lp_hoeg_plus", s=3, p=3.0, L=1.0, K=5,
                       subproblem=SubproblemSettings(tolerance=1e-300, max_inner_iterations=1))
    with pytest.raises(SubproblemError) as info:
        run(entry.oracle, [1.9, -1.9], cfg)
    assert info.value.iteration == 0


def test_zero_lipschitz_requires_explicit_L():
    with pytest.raises(ConfigError, match="supply L"):
        run(make_problem("bilinear").oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=2, K=5))


def test_outside_box_flagged():
    entry = make_problem("modified_forsaken")
    trace = run(entry.oracle, [0.5, 0.5], SolverConfig("hoeg_plus_l2", s=1, K=10), box=([0.4, 0.4], [0.45, 0.45]))
    assert trace.outside_box > 0


def test_restricted_gap_examples(identity2):
    assert restricted_gap(identity2, [0.0, 0.0], [0.0, 0.0], 1.0, 10_000, 0) <= 1e-12
    assert restricted_gap(identity2, [1.0, 0.0], [0.0, 0.0], 1.0, 10_000, 0) == pytest.approx(0.25, abs=5e-3)
    bil = make_problem("bilinear").oracle
    assert restricted_gap(bil, [3.0, 3.0], [0.0, 0.0], 1.0, 1000, 0) > 0
    assert restricted_gap(bil, [3.0, 3.0], [0.0, 0.0], 1.0, 1000, 4) == restricted_gap(
        bil, [3.0, 3.0], [0.0, 0.0], 1.0, 1000, 4)


def test_algorithm_enum_roundtrip():
    assert SolverConfig(Algorithm.EAG).algorithm is Algorithm.EAG
    assert SolverConfig("eag").nu == 0.0
