"""Descent tracing, termination statuses, and curve residual checks."""

import math

import numpy as np
import pytest

from steiner import (CONVERGED, MAX_STEPS, STALLED, ConfigError, FlowConfig, FlowTrace,
                     InputError, NumericalError, graph_residual, tangency_residual,
                     trace_flow, weiszfeld)

from util import curve_trace, make_objective


@pytest.mark.parametrize("kwargs", [
    dict(grad_tol=0.0),
    dict(max_steps=0),
    dict(initial_step=-1.0),
    dict(armijo_c=1.0),
    dict(backtrack_factor=0.0),
    dict(min_step=2.0, initial_step=1.0),
])
def test_flow_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FlowConfig(**kwargs)


def test_squared_flow_reaches_centroid():
    obj = make_objective([[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]], kind="squared")
    trace = trace_flow(obj, [10.0, 10.0], FlowConfig(grad_tol=1e-8))
    assert trace.status == CONVERGED
    np.testing.assert_allclose(trace.terminal_point, [1.0, 1.0], atol=1e-8)


def test_equilateral_triangle_flow_reaches_center():
    anchors = [[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]]
    obj = make_objective(anchors)
    trace = trace_flow(obj, [5.0, 5.0])
    assert trace.status == CONVERGED
    np.testing.assert_allclose(trace.terminal_point, [0.5, math.sqrt(3.0) / 6.0],
                               atol=1e-6)


def test_flow_terminal_matches_weiszfeld():
    anchors = [[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]]
    obj = make_objective(anchors, epsilon=1e-9)
    trace = trace_flow(obj, [1.0, 1.0])
    oracle = weiszfeld(obj.anchors, tol=1e-12)
    assert trace.status == CONVERGED
    np.testing.assert_allclose(trace.terminal_point, oracle.location, atol=1e-5)


def test_first_sample_is_the_start_and_values_strictly_decrease():
    obj = make_objective([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
    start = np.array([7.0, -3.0])
    trace = trace_flow(obj, start)
    np.testing.assert_array_equal(trace.points[0], start)
    assert trace.step_lens[0] == 0.0
    assert np.all(np.diff(trace.values) < 0.0)
    assert trace.status == CONVERGED
    assert trace.terminal_grad_norm <= FlowConfig().grad_tol


def test_converged_at_start_gives_single_sample():
    obj = make_objective([[3.0, 3.0]], kind="squared")
    trace = trace_flow(obj, [3.0, 3.0])
    assert trace.status == CONVERGED
    assert len(trace) == 1


def test_max_steps_status():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    cfg = FlowConfig(max_steps=3, initial_step=0.01)
    trace = trace_flow(obj, [100.0, 100.0], cfg)
    assert trace.status == MAX_STEPS
    assert np.all(np.diff(trace.values) < 0.0)


def test_stalled_when_backtracking_range_runs_out():
    # With min_step just below initial_step only t = 1 is tried; a full
    # step on |x|^2 maps x to -x with zero decrease, so no Armijo success
    # is possible inside the allowed range.
    obj = make_objective([[0.0, 0.0]], kind="squared")
    cfg = FlowConfig(initial_step=1.0, min_step=0.9)
    trace = trace_flow(obj, [3.0, 4.0], cfg)
    assert trace.status == STALLED
    assert len(trace) == 1


def test_flat_plateau_stalls_below_coordinate_resolution():
    # Far from narrow wells the gradient is ~1e-46: above this absurdly
    # small tolerance, but adding a step of that size to coordinates of
    # order one cannot change them, so no representable progress exists.
    obj = make_objective([[0.0, 0.0], [10.0, 0.0]], kind="gaussian_well", sigma=0.5)
    cfg = FlowConfig(grad_tol=1e-300, max_steps=50)
    trace = trace_flow(obj, [5.0, 1.5], cfg)
    assert trace.status == STALLED
    assert len(trace) == 1


def test_numerical_failure_carries_partial_trace():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    with pytest.raises(NumericalError):
        trace_flow(obj, [1e200, 1e200])


def test_tangency_residual_of_produced_traces_is_tiny():
    rng = np.random.default_rng(41)
    for kind, kwargs in (("euclidean", {}), ("squared", {}),
                         ("gaussian_well", dict(sigma=2.0))):
        anchors = rng.uniform(0.0, 10.0, size=(5, 2))
        obj = make_objective(anchors, kind=kind, **kwargs)
        trace = trace_flow(obj, rng.uniform(0.0, 10.0, size=2))
        if len(trace) >= 2:
            assert tangency_residual(obj, trace) <= 1e-12


def test_tangency_residual_perpendicular_step_is_one():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    # At (1, 0) the force is (-2, 0); step due +y is perpendicular.
    pts = np.array([[1.0, 0.0], [1.0, 0.5]])
    trace = FlowTrace(pts, [1.0, 0.9], [2.0, 2.0], [0.0, 0.5], CONVERGED)
    assert tangency_residual(obj, trace) == pytest.approx(1.0, abs=1e-12)


def test_tangency_residual_thirty_degree_step():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    ang = math.radians(30.0)
    step = 0.1 * np.array([-math.cos(ang), math.sin(ang)])  # 30 deg off -grad
    pts = np.array([[1.0, 0.0], [1.0, 0.0] + step])
    trace = FlowTrace(pts, [1.0, 0.9], [2.0, 2.0], [0.0, 0.1], CONVERGED)
    assert tangency_residual(obj, trace) == pytest.approx(0.5, abs=1e-12)


def test_tangency_residual_skips_zero_steps():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    pts = np.array([[1.0, 0.0], [1.0, 0.0], [0.9, 0.0]])
    trace = FlowTrace(pts, [1.0, 1.0, 0.8], [2.0, 2.0, 1.8], [0.0, 0.0, 0.1], CONVERGED)
    assert tangency_residual(obj, trace) <= 1e-12


def test_tangency_residual_needs_two_samples():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    trace = FlowTrace(np.array([[1.0, 0.0]]), [1.0], [2.0], [0.0], CONVERGED)
    with pytest.raises(InputError):
        tangency_residual(obj, trace)


def test_graph_residual_on_radial_ray_of_quadratic():
    # The flow line of an isotropic quadratic from (2, 1) is the straight
    # ray toward the anchor: Z_2 = 0.5 Z_1 along the whole curve.
    obj = make_objective([[0.0, 0.0]], kind="squared")
    trace = trace_flow(obj, [2.0, 1.0], FlowConfig(initial_step=0.05))
    res = graph_residual(obj, trace, axis=0)
    assert res is not None and res.shape == (1,)
    assert res[0] <= 1e-9


def test_graph_residual_one_dimension_is_empty():
    obj = make_objective([[0.0]], kind="squared")
    trace = trace_flow(obj, [3.0])
    res = graph_residual(obj, trace, axis=0)
    assert res is not None and res.shape == (0,)


def test_graph_residual_on_symmetry_axis():
    # Two anchors at (0,0) and (4,0): on the axis x = 2 the x-derivative is
    # (2-0)/d + (2-4)/d = 0 analytically, so the flow from (2, 3) is the
    # vertical line; the x coordinate never moves and only the y axis
    # qualifies.
    obj = make_objective([[0.0, 0.0], [4.0, 0.0]], epsilon=1e-9)
    g = obj.gradient([2.0, 3.0])
    assert abs(g[0]) < 1e-15
    trace = trace_flow(obj, [2.0, 3.0], FlowConfig(grad_tol=1e-6))
    assert graph_residual(obj, trace, axis=0) is None
    res = graph_residual(obj, trace, axis=1)
    assert res is not None
    assert res[0] <= 1e-9


def test_graph_residual_second_order_on_exact_curves():
    # Samples on the exact flow curve make the residual a pure trapezoid
    # error: halving the spacing divides it by about four.
    obj = make_objective([[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]],
                         kind="gaussian_well", sigma=2.5)
    coarse = graph_residual(obj, curve_trace(obj, [4.0, 3.5], 2.4, 0.04), axis=0)
    fine = graph_residual(obj, curve_trace(obj, [4.0, 3.5], 2.4, 0.02), axis=0)
    assert 3.0 <= coarse[0] / fine[0] <= 5.0


def test_graph_residual_shrinks_as_euler_traces_refine():
    obj = make_objective([[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]],
                         kind="gaussian_well", sigma=2.5)
    res = []
    for s in (0.4, 0.2, 0.1):
        trace = trace_flow(obj, [4.0, 3.5], FlowConfig(grad_tol=1e-6, initial_step=s))
        res.append(graph_residual(obj, trace, axis=0)[0])
    assert res[2] < res[1] < res[0]


def test_graph_residual_picks_longest_monotone_run():
    # Hand-built zig-zag in the axis coordinate: samples 0..3 increase,
    # then 3..5 decrease; the longer increasing run must be used, and a
    # slope floor above the field magnitude makes the check inapplicable.
    obj = make_objective([[10.0, 10.0]], kind="squared")
    pts = np.array([[0.0, 0.0], [1.0, 0.5], [2.0, 1.0], [3.0, 1.5],
                    [2.5, 1.2], [2.0, 1.0]])
    m = len(pts)
    trace = FlowTrace(pts, np.linspace(1.0, 0.5, m), np.ones(m), np.zeros(m), MAX_STEPS)
    res = graph_residual(obj, trace, axis=0)
    assert res is not None
    assert graph_residual(obj, trace, axis=0, slope_floor=1e9) is None


def test_graph_residual_rejects_bad_axis():
    obj = make_objective([[0.0, 0.0]], kind="squared")
    trace = trace_flow(obj, [1.0, 1.0])
    with pytest.raises(InputError, match="axis"):
        graph_residual(obj, trace, axis=2)


@pytest.mark.parametrize("kind, kwargs", [
    ("euclidean", {}),
    ("squared", {}),
    ("p_norm", dict(p=3.0, epsilon=1e-6)),
])
def test_start_independence_on_convex_objectives(kind, kwargs):
    rng = np.random.default_rng(53)
    obj = make_objective(rng.uniform(0.0, 10.0, size=(6, 2)), kind=kind, **kwargs)
    values = []
    for _ in range(20):
        trace = trace_flow(obj, rng.uniform(-2.0, 12.0, size=2))
        assert trace.status == CONVERGED
        values.append(obj.value(trace.terminal_point))
    values = np.array(values)
    spread = values.max() - values.min()
    assert spread <= 1e-8 * max(1.0, abs(values.min()))


def test_trace_csv_round_trip(tmp_path):
    obj = make_objective([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
    trace = trace_flow(obj, [6.0, 6.0])
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,Z_1,Z_2,U,grad_norm,step_len"
    assert len(lines) == len(trace) + 1
    for k, line in enumerate(lines[1:]):
        cells = line.split(",")
        assert int(cells[0]) == k
        np.testing.assert_array_equal([float(cells[1]), float(cells[2])], trace.points[k])
        assert float(cells[3]) == trace.values[k]  # 17 significant digits round-trip


def test_compressed_tail_keeps_strict_decrease_and_converges_deep():
    # Near the bottom the per-step decrease falls below one ulp of U; the
    # tracer must keep refining the terminal point without recording value
    # ties, and still reach the tight gradient tolerance.
    rng = np.random.default_rng(77)
    anchors = rng.uniform(0.0, 10.0, size=(30, 2))
    obj = make_objective(anchors, kind="squared")
    trace = trace_flow(obj, [9.0, 9.0], FlowConfig(grad_tol=1e-9))
    assert trace.status == CONVERGED
    assert trace.terminal_grad_norm <= 1e-9
    assert np.all(np.diff(trace.values) < 0.0)
    assert tangency_residual(obj, trace) <= 1e-12  # holds through the folded tail
    centroid = anchors.mean(axis=0)
    np.testing.assert_allclose(trace.terminal_point, centroid, atol=1e-9)
