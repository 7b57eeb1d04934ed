import numpy as np
import pytest

import hingeflow as hf
from hingeflow import exceptions as hx
from hingeflow.geometry import Dataset
from hingeflow.optimizer import TRACE_HEADER, AssumptionWarning, TraceRow

AXES = Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]),
               name="axes")


def config(**kw):
    base = dict(eta=0.01, alpha=1.0, zeta=0.0, max_iters=10)
    base.update(kw)
    return hf.TrainConfig(**base)


class TestTrainConfig:
    def test_alpha_must_be_positive(self):
        with pytest.raises(hx.InvalidHyperparameter):
            config(alpha=0.0)

    def test_eta_must_be_positive(self):
        with pytest.raises(hx.InvalidHyperparameter):
            config(eta=-0.01)

    def test_unknown_loss(self):
        with pytest.raises(hx.InvalidHyperparameter):
            config(loss="perceptron")

    def test_u0_copied_and_frozen(self):
        u0 = np.array([1.0, 2.0])
        cfg = config(u0=u0)
        u0[0] = 9.0
        assert cfg.u0[0] == 1.0
        with pytest.raises(ValueError):
            cfg.u0[0] = 5.0


class TestGdStep:
    def test_first_step_from_origin(self, fig1):
        state = hf.initial_state(fig1, config())
        nxt = hf.gd_step(state, fig1, config())
        assert np.array_equal(nxt.u, [0.02, 0.04])
        assert nxt.beta == 1.0  # hinge risk zero at origin, so the threshold moves
        assert nxt.t == 1 and nxt.n_updates == 1

    def test_inactive_state_only_moves_threshold(self, fig1):
        cfg = config()
        state = hf.TrainState(t=5, u=np.array([0.0, 5.0]), beta=3.0,
                              active_set=np.array([], dtype=np.intp), n_updates=3)
        nxt = hf.gd_step(state, fig1, cfg)
        assert np.array_equal(nxt.u, state.u)
        assert nxt.beta == 4.0 and nxt.n_updates == 4

    def test_threshold_frozen_under_logistic(self, fig1):
        cfg = config(loss="logistic")
        state = hf.initial_state(fig1, cfg)
        for _ in range(5):
            state = hf.gd_step(state, fig1, cfg)
        assert state.beta == 0.0
        assert state.u[1] > 0

    def test_update_uses_snapshot_not_new_threshold(self, fig1):
        # the gradient must come from the pre-step active set
        cfg = config()
        state = hf.initial_state(fig1, cfg)
        nxt = hf.gd_step(state, fig1, cfg)
        # origin active set is everything; u' = eta * sum z regardless of fire
        assert np.array_equal(nxt.u, 0.01 * fig1.signed.sum(axis=0))

    def test_active_set_reported_at_new_state(self, fig1):
        cfg = config()
        nxt = hf.gd_step(hf.initial_state(fig1, cfg), fig1, cfg)
        dots = fig1.signed @ nxt.u
        assert list(nxt.active_set) == list(np.nonzero(dots <= nxt.beta)[0])


class TestTrain:
    def test_threshold_is_alpha_times_update_count(self, short_run):
        trace, cfg = short_run
        assert trace.final_beta == cfg.alpha * len(trace.beta_update_times)

    def test_update_times_strictly_increasing(self, short_run):
        trace, _ = short_run
        times = trace.beta_update_times
        assert all(a < b for a, b in zip(times, times[1:]))

    def test_long_run_aligns_with_separator(self, fig1, fig1_cert):
        trace = hf.train(fig1, config(max_iters=100_000), fig1_cert)
        assert hf.cosine_gap(trace.final_u, fig1_cert) < 0.01

    def test_rows_monotone_in_t(self, short_run):
        trace, _ = short_run
        ts = [r.t for r in trace.rows]
        assert ts == sorted(ts)
        assert ts[-1] == 20_000

    def test_margin_columns_need_certificate(self, fig1):
        trace = hf.train(fig1, config(max_iters=50))
        assert all(r.margin_gap is None for r in trace.rows)

    def test_update_vectors_snapshot(self, fig1, fig1_cert):
        trace = hf.train(fig1, config(max_iters=2_000), fig1_cert)
        assert len(trace.update_vectors) == len(trace.beta_update_times)
        # snapshots are independent copies, not views of the live iterate
        assert not np.shares_memory(trace.update_vectors[0], trace.final_u)

    def test_vanilla_hinge_never_updates_threshold(self, fig1):
        trace = hf.train(fig1, config(loss="vanilla_hinge", max_iters=500))
        assert trace.beta_update_times == []
        assert trace.final_beta == 0.0

    def test_not_separable_suspected(self):
        data = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]),
                       np.array([1.0, 1.0]), name="collinear")
        with pytest.raises(hx.NotSeparableSuspected):
            hf.train(data, config(max_iters=2_000))

    def test_divergent_step_reports_nonfinite(self, fig1):
        with pytest.raises(hx.NonFinite):
            hf.train(fig1, config(eta=1e12, max_iters=50))

    def test_tiny_alpha_warns_about_assumption(self, fig1, fig1_cert):
        with pytest.warns(AssumptionWarning):
            hf.train(fig1, config(alpha=0.005, max_iters=100), fig1_cert)

    def test_normalized_logistic_unit_steps(self, fig1):
        # each step has length exactly eta, so the norm can never exceed eta*t
        trace = hf.train(fig1, config(loss="logistic_normalized", max_iters=100))
        norm = np.linalg.norm(trace.final_u)
        assert norm <= 100 * 0.01 + 1e-12
        assert norm >= 0.9 * 100 * 0.01


class TestTraceCsv:
    def test_header_and_width(self, short_run):
        trace, _ = short_run
        lines = trace.csv_lines()
        assert lines[0] == TRACE_HEADER
        assert all(len(l.split(",")) == 7 for l in lines)

    def test_values_round_trip_through_repr(self, short_run):
        trace, _ = short_run
        first = trace.csv_lines()[1].split(",")
        assert int(first[0]) == trace.rows[0].t
        assert float(first[2]) == trace.rows[0].norm_u

    def test_missing_margin_columns_serialize_empty(self, fig1):
        trace = hf.train(fig1, config(max_iters=5))
        cells = trace.csv_lines()[1].split(",")
        assert cells[3] == "" and cells[4] == ""

    def test_beta_updates_csv(self, short_run):
        trace, _ = short_run
        lines = trace.beta_updates_csv_lines()
        assert lines[0] == "k,t_k,gap"
        first = lines[1].split(",")
        assert first[0] == "1" and first[2] == ""
        if len(lines) > 2:
            second = lines[2].split(",")
            gap = int(trace.beta_update_times[1]) - int(trace.beta_update_times[0])
            assert second[2] == str(gap)

    def test_column_accessor_skips_missing(self, fig1):
        trace = hf.train(fig1, config(max_iters=5))
        with pytest.raises(hx.UnknownName):
            trace.column("not_a_column")
        ts, risks = trace.column("risk")
        assert len(ts) == len(risks) > 0


class TestFlowStep:
    def test_crossing_hits_grid_exactly(self):
        u = np.array([0.25, 0.8])
        u2, ev = hf.flow_step(u, AXES, beta_level=0.5, alpha=1.0)
        assert ev.index == 0 and ev.level == 1.0
        assert ev.length == pytest.approx(0.75)
        assert u2 @ np.array([1.0, 0.0]) == 1.0  # exact, not approximate

    def test_on_plane_reports_zero_length_event(self):
        u = np.array([1.0, 0.8])
        u2, ev = hf.flow_step(u, AXES, beta_level=1.0, alpha=1.0)
        assert ev.length == 0.0
        assert np.array_equal(u2, u)

    def test_no_active_points(self):
        with pytest.raises(hx.ZeroGradient):
            hf.flow_step(np.array([2.0, 3.0]), AXES, beta_level=0.5, alpha=1.0)

    def test_event_order_matches_dense_descent(self, fig2a):
        # the piecewise-linear flow and a small-step descent at a frozen
        # threshold must cross the same grid planes in the same order
        level, alpha = 1.0, 1.0
        Z = fig2a.signed

        flow_events = []
        u = np.full(2, 1e-9)  # just off the level-0 planes
        for _ in range(200):
            try:
                u, ev = hf.flow_step(u, fig2a, level, alpha)
            except hx.ZeroGradient:
                break
            pair = (ev.index, ev.level)
            if flow_events and flow_events[-1] == pair:
                u = u * (1.0 + 1e-9)  # nudge past the plane just reached
                continue
            flow_events.append(pair)

        dense_events = []
        v = np.zeros(2)
        crossed = set()
        for _ in range(400_000):
            dots = Z @ v
            for i in range(fig2a.n):
                k = int(np.floor(dots[i] / alpha + 1e-12))
                for kk in range(1, k + 1):
                    if (i, float(kk * alpha)) not in crossed:
                        crossed.add((i, float(kk * alpha)))
                        dense_events.append((i, float(kk * alpha)))
            active = dots <= level
            if not active.any():
                break
            v = v + 1e-4 * Z[active].sum(axis=0)

        assert flow_events == dense_events[: len(flow_events)]
        assert len(flow_events) >= 5


class TestBetaIntervals:
    def test_gaps_from_update_times(self):
        trace = hf.Trace(beta_update_times=[3, 7, 11])
        assert hf.beta_intervals(trace) == [(1, 4), (2, 4)]

    def test_single_update_insufficient(self):
        trace = hf.Trace(beta_update_times=[5])
        with pytest.raises(hx.InsufficientUpdates):
            hf.beta_intervals(trace)


class TestRecording:
    def test_record_every_thins_rows(self, fig1):
        trace = hf.train(fig1, config(max_iters=1_000, record_every=100))
        ts = [r.t for r in trace.rows]
        assert set(ts) <= set(range(0, 1_001, 100)) | set(trace.beta_update_times) | {1_000}

    def test_default_recording_dense_early(self, fig1):
        trace = hf.train(fig1, config(max_iters=1_500))
        ts = {r.t for r in trace.rows}
        assert set(range(1, 101)) <= ts

    def test_store_iterates(self, fig1):
        trace = hf.train(fig1, config(max_iters=200, store_iterates=True))
        assert trace.iterates and all(u.shape == (2,) for _, u in trace.iterates)
