import io

import numpy as np
import pytest

from hairprism.losses import LossConfig, LossValue, c_mean, loss_colli
from hairprism.mesh import icosphere
from hairprism.optimize import (Adam, OptimSchedule, OptimTrace, OptimizationError, fit_hairstyle,
                                optimize_geometry, run_adam)
from hairprism.sdf import BoxSdf, MeshSdf
from hairprism.strands import synth_hairstyle

from conftest import straight_hairstyle


def quadratic(x):
    return LossValue(float(np.sum(x ** 2)), 2 * x, {"q": float(np.sum(x ** 2))})


class TestSchedule:
    @pytest.mark.parametrize("kw", [dict(step_count=0), dict(learning_rate=0.0), dict(adam_betas=(1.0, 0.9)),
                                    dict(adam_eps=0.0), dict(convergence_tol=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            OptimSchedule(**kw)

    def test_defaults(self):
        s = OptimSchedule()
        assert (s.step_count, s.learning_rate, s.adam_betas, s.adam_eps) == (5000, 1e-3, (0.9, 0.999), 1e-8)


def test_adam_matches_hand_rollout():
    # three explicit Adam steps on f(x) = x^2 from x = 1, written out longhand
    sched = OptimSchedule(3, 0.1)
    x, m, v = 1.0, 0.0, 0.0
    expected = []
    for t in range(1, 4):
        g = 2 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        expected.append(x)
    opt, y = Adam((1,), sched), np.array([1.0])
    for e in expected:
        y = opt.step(y, 2 * y)
        assert y[0] == pytest.approx(e, abs=1e-15)


class TestRunAdam:
    def test_trace_shape(self):
        x, tr = run_adam(np.ones(3), quadratic, OptimSchedule(20, 0.05, log_every=0))
        assert [r["step"] for r in tr.records] == list(range(21))
        assert tr.records[-1]["loss"] == pytest.approx(float(np.sum(x ** 2)))
        assert "term_q" in tr.records[0] and "grad_norm" in tr.records[0]
        assert np.all(np.diff(tr.best_so_far()) <= 0)

    def test_nan_aborts_with_trace(self):
        def bad(x):
            v = np.nan if x[0] < 0.95 else float(np.sum(x ** 2))
            return LossValue(v, 2 * x)
        with pytest.raises(OptimizationError) as exc:
            run_adam(np.ones(2), bad, OptimSchedule(50, 0.1))
        assert exc.value.trace.records and not np.isfinite(exc.value.trace.records[-1]["loss"])

    def test_mask_freezes(self):
        mask = np.array([True, False, True])
        x, _ = run_adam(np.ones(3), quadratic, OptimSchedule(10, 0.1), mask=mask)
        assert x[1] == 1.0 and x[0] < 1.0

    def test_convergence_tol(self):
        _, tr = run_adam(np.ones(3), quadratic, OptimSchedule(10000, 0.01, convergence_tol=1e-3))
        assert tr.converged and len(tr.records) < 10001

    def test_trace_writers(self):
        _, tr = run_adam(np.ones(2), quadratic, OptimSchedule(3, 0.1))
        buf = io.StringIO()
        tr.write_csv(buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "step,loss,term_q,grad_norm" and len(lines) == 5
        assert float(lines[1].split(",")[1]) == tr.records[0]["loss"]
        buf = io.StringIO()
        tr.write_jsonl(buf)
        assert len(buf.getvalue().splitlines()) == 4


class TestFit:
    def test_identical_converges_immediately(self):
        h = synth_hairstyle("wavy", 5, 20, 0)
        out, tr = fit_hairstyle(h, h, sched=OptimSchedule(100))
        assert tr.converged and len(tr.records) == 1 and tr.records[0]["loss"] == 0.0
        np.testing.assert_array_equal(out.points, h.points)

    def test_noise_recovery_small(self):
        target = synth_hairstyle("curly", 20, 100, 1)
        rng = np.random.default_rng(0)
        init = target.with_points(target.points + 0.01 * rng.normal(size=target.points.shape))
        out, tr = fit_hairstyle(init, target, sched=OptimSchedule(500, 1e-3, log_every=0))
        rmse = lambda h: np.sqrt(np.mean(np.sum((h.points - target.points) ** 2, axis=-1)))
        assert rmse(out) < 0.1 * rmse(init)
        assert tr.records[-1]["loss"] <= tr.records[0]["loss"]

    def test_frozen_roots_bit_unchanged(self):
        target = synth_hairstyle("wavy", 5, 20, 0)
        init = target.with_points(target.points + 0.01)
        out, _ = fit_hairstyle(init, target, sched=OptimSchedule(20), freeze_roots=True)
        assert out.points[:, 0].tobytes() == init.points[:, 0].tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fit_hairstyle(synth_hairstyle("wavy", 5, 20), synth_hairstyle("wavy", 5, 21))

    def test_degenerate_becomes_optimization_error(self):
        target = synth_hairstyle("wavy", 2, 5, 0)
        pts = target.points.copy()
        pts[0, 2] = pts[0, 1]
        with pytest.raises(OptimizationError):
            fit_hairstyle(target.with_points(pts), target, sched=OptimSchedule(5))


class TestGeometry:
    def test_already_optimal_unchanged(self):
        h = straight_hairstyle(6, 10)
        sources = {"bbox": BoxSdf([0, 0, 0], [5, 5, 5])}
        out, tr = optimize_geometry(h, LossConfig(c_target=0.0), sources, OptimSchedule(50))
        assert tr.records[0]["loss"] == 0.0 and tr.records[0]["grad_norm"] == 0.0
        np.testing.assert_array_equal(out.points, h.points)

    def test_collision_decreases_and_roots_fixed(self):
        head = MeshSdf(icosphere(2))
        h = synth_hairstyle("wavy", 10, 30, 0)
        pts = h.points.copy()
        pts[:, 1:] *= 0.9
        h = h.with_points(pts)
        before = loss_colli(h, head).value
        assert before > 0
        out, _ = optimize_geometry(h, LossConfig(), {"head": head}, OptimSchedule(100, 1e-3, log_every=0))
        assert loss_colli(out, head).value < before
        assert out.points[:, 0].tobytes() == h.points[:, 0].tobytes()

    def test_curvature_moves_toward_target(self):
        h = synth_hairstyle("straight", 10, 40, 0)
        cfg = LossConfig(c_target=0.1)
        out, _ = optimize_geometry(h, cfg, {}, OptimSchedule(100, 1e-3, log_every=0))
        assert abs(c_mean(out) - 0.1) <= abs(c_mean(h) - 0.1)

    def test_deterministic(self):
        head = MeshSdf(icosphere(2))
        h = synth_hairstyle("curly", 8, 20, 0)
        runs = [optimize_geometry(h, LossConfig(), {"head": head}, OptimSchedule(30, log_every=0))
                for _ in range(2)]
        assert runs[0][0].points.tobytes() == runs[1][0].points.tobytes()
        assert runs[0][1].records == runs[1][1].records


def test_trace_best_so_far_empty():
    assert OptimTrace().losses.shape == (0,)
