from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajrecon.codec import build_prompt, build_target, estimate_tokens, quantize_sample
from trajrecon.dataset import make_windows
from trajrecon.degrade import DegradeConfig, degrade
from trajrecon.errors import NoObservationsError, NoParseableRowsError, SingularCovarianceError, TokenBudgetExceededError
from trajrecon.evalreport import score_window
from trajrecon.geo import KT_TO_MS, GeoPoint, project_forward
from trajrecon.llmclient import CompletionClient, LlmEndpointConfig, MockBehavior, MockServer
from trajrecon.reconstruct import (
    EXTRAPOLATED,
    FILLED,
    MEASURED,
    MODEL,
    KalmanConfig,
    ReconstructionResult,
    align_rows,
    check_budget,
    reconstruct_kalman,
    reconstruct_linear,
    reconstruct_llm,
)
from trajrecon.simkernel import AIRPORTS, StateSample, generate_mission, simulate

A = GeoPoint(40.0, -86.0)
QUERIES = [5.0 * k for k in range(13)]
ZERO = DegradeConfig(0, 0, 0, 0, 0, 0)


def straight(t: float, brg=60.0, tas=150.0, vs=500.0) -> StateSample:
    p = project_forward(A, brg, tas * KT_TO_MS * t)
    return StateSample(t, p.lat_deg, p.lon_deg, 5000 + vs * t / 60.0, tas, vs, brg)


def s(t, lat=40.0, lon=-86.0, alt=1000.0, tas=100.0, vs=0.0, trk=90.0):
    return StateSample(t, lat, lon, alt, tas, vs, trk)


@pytest.fixture(scope="module")
def window():
    truth = simulate(generate_mission(AIRPORTS["KLAF"], AIRPORTS["KVPZ"], rng_seed=1), flight_id="K")
    return make_windows(truth, degrade(truth, DegradeConfig(seed=1)))[5]


# ------------------------------------------------------------------ linear

def test_linear_examples():
    pts = [s(0, alt=1000, trk=350), s(10, alt=2000, trk=10)]
    r = reconstruct_linear(pts, [0.0, 5.0, 10.0])
    assert r.estimates[0] == pts[0]
    assert r.estimates[2] == pts[1]
    assert r.estimates[1].alt_ft == 1500.0
    assert r.estimates[1].track_deg == pytest.approx(0.0, abs=1e-9)
    assert r.sources == [MEASURED] * 3


def test_linear_holds_and_flags_outside_range():
    pts = [s(10, alt=1000), s(20, alt=2000)]
    r = reconstruct_linear(pts, [0.0, 15.0, 30.0])
    assert r.sources == [EXTRAPOLATED, MEASURED, EXTRAPOLATED]
    assert r.estimates[0].alt_ft == 1000 and r.estimates[2].alt_ft == 2000
    assert reconstruct_linear(pts[:1], [0.0, 30.0]).estimates[1].alt_ft == 1000


def test_linear_errors():
    with pytest.raises(NoObservationsError):
        reconstruct_linear([], [0.0])
    with pytest.raises(ValueError):
        reconstruct_linear([s(0)], [5.0, 0.0])


# ------------------------------------------------------------------ kalman

def test_kalman_zero_noise_straight_flight():
    pts = [straight(0.5 * k) for k in range(121)]
    truth = [straight(t) for t in QUERIES]
    for smoother in (False, True):
        res = reconstruct_kalman(pts, QUERIES, KalmanConfig.from_degrade(ZERO, smoother=smoother))
        row = score_window(truth, res.estimates)
        assert row.h_max < 1.0 and row.v_max < 1.0
        assert res.estimates[3].track_deg == pytest.approx(60.0, abs=1e-3)
        assert res.estimates[3].tas_kt == pytest.approx(150.0, abs=1e-3)
        assert res.estimates[3].vs_fpm == pytest.approx(500.0, abs=1e-2)


def test_kalman_extrapolation_has_growing_uncertainty():
    pts = [straight(0.5 * k) for k in range(61)]
    res = reconstruct_kalman(pts, QUERIES, KalmanConfig())
    later = [q for q in QUERIES if q > 30]
    idx = [QUERIES.index(q) for q in later]
    assert all(res.sources[i] == EXTRAPOLATED for i in idx)
    sig = [res.position_sigma_m[i] for i in idx]
    assert all(b > a for a, b in zip(sig, sig[1:]))
    assert res.position_sigma_m[-1] > 5 * res.position_sigma_m[3]


def test_kalman_needs_two_points_and_sane_noise():
    with pytest.raises(NoObservationsError):
        reconstruct_kalman([s(0)], QUERIES)
    with pytest.raises(ValueError):
        KalmanConfig(accel_psd_h=0)
    with pytest.raises(ValueError):
        KalmanConfig(model="imm")
    pts = [straight(0.5 * k) for k in range(121)]
    with pytest.raises(SingularCovarianceError):
        reconstruct_kalman(pts, QUERIES, KalmanConfig(accel_psd_h=1e300))


def test_kalman_is_deterministic(window):
    a = reconstruct_kalman(window.inputs, window.query_times, KalmanConfig())
    b = reconstruct_kalman(window.inputs, window.query_times, KalmanConfig())
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert ReconstructionResult.from_dict(a.to_dict()).estimates == a.estimates


def test_ct_model_option(window):
    res = reconstruct_kalman(window.inputs, window.query_times, KalmanConfig(model="ct"))
    row = score_window(window.targets, res.estimates)
    assert row.h_mean < 100.0
    assert res.diagnostics["model"] == "ct"


def test_smoother_beats_filter_on_noisy_window(window):
    f = score_window(window.targets, reconstruct_kalman(window.inputs, window.query_times,
                                                        KalmanConfig(smoother=False)).estimates)
    rts = score_window(window.targets, reconstruct_kalman(window.inputs, window.query_times,
                                                          KalmanConfig()).estimates)
    assert rts.h_rmse <= f.h_rmse * 1.05


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 80), min_size=1, max_size=20), st.integers(0, 1000))
def test_one_estimate_per_query(queries, seed):
    q = sorted(queries)
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.uniform(0.5, 3.0, 30))
    pts = [straight(float(t)) for t in times]
    for res in (reconstruct_linear(pts, q), reconstruct_kalman(pts, q, KalmanConfig())):
        assert [e.time_s for e in res.estimates] == pytest.approx(q)
        assert len(res.sources) == len(q)


# --------------------------------------------------------------------- llm

def test_align_rows_nearest_and_fill():
    rows = [s(0.0, alt=1000), s(6.0, alt=1600), s(20.0, alt=3000)]
    res = align_rows(rows, [0.0, 5.0, 10.0, 15.0, 20.0])
    assert res.sources == [MODEL, MODEL, FILLED, FILLED, MODEL]
    assert res.estimates[1].alt_ft == 1600 and res.estimates[1].time_s == 5.0
    assert res.estimates[2].alt_ft == pytest.approx(2000)


def test_llm_oracle_gives_zero_error(window):
    prompt = build_prompt(window.inputs)
    with MockServer(MockBehavior(mode="oracle", targets={prompt: build_target(window.targets)})) as srv:
        res = reconstruct_llm(window.inputs, window.query_times, LlmEndpointConfig(base_url=srv.base_url))
    row = score_window(window.targets, res.estimates)
    assert row.h_max == 0.0 and row.v_max == 0.0
    assert res.estimates == window.targets
    assert res.sources == [MODEL] * 13
    assert res.diagnostics["prompt_tokens"] == estimate_tokens(prompt)


def test_llm_echo_surfaces_as_error(window):
    with MockServer(MockBehavior(mode="echo")) as srv:
        with pytest.raises(NoParseableRowsError) as exc:
            reconstruct_llm(window.inputs, window.query_times, LlmEndpointConfig(base_url=srv.base_url))
    counts = exc.value.counts
    assert counts["kept"] == 0
    assert counts["echoed"] == len(window.inputs)
    assert "raw_text" in counts


def test_llm_partial_output_is_filled_and_flagged(window):
    half = build_target(window.targets[::2])
    with MockServer(MockBehavior(mode="fixed", text=half)) as srv:
        res = reconstruct_llm(window.inputs, window.query_times, LlmEndpointConfig(base_url=srv.base_url))
    assert res.sources[::2] == [MODEL] * 7
    assert res.sources[1::2] == [FILLED] * 6
    assert res.diagnostics["filled"] == 6
    assert res.diagnostics["parse"]["kept"] == 7


def test_llm_budget_checked_before_any_request():
    truth = simulate(generate_mission(AIRPORTS["KLAF"], AIRPORTS["KVPZ"], rng_seed=1))
    dense = DegradeConfig(gap_rate_per_min=0.0, seed=2)
    w90 = make_windows(truth, degrade(truth, dense), window_s=90, stride_s=90)[2]
    with MockServer(MockBehavior(mode="echo")) as srv:
        with pytest.raises(TokenBudgetExceededError) as exc:
            reconstruct_llm(w90.inputs, w90.query_times, LlmEndpointConfig(base_url=srv.base_url))
        assert srv.request_count == 0
    assert exc.value.estimated > exc.value.budget == 2048
    with pytest.raises(TokenBudgetExceededError):
        check_budget("1" * 2049)
    assert check_budget("1" * 2048) == 2048


def test_llm_shared_client_and_quantized_rows(window):
    text = build_target([quantize_sample(e) for e in window.targets])
    with MockServer(MockBehavior(mode="fixed", text=text)) as srv:
        with CompletionClient(LlmEndpointConfig(base_url=srv.base_url)) as client:
            a = reconstruct_llm(window.inputs, window.query_times, client)
            b = reconstruct_llm(window.inputs, window.query_times, client)
        assert srv.request_count == 2
        assert srv.requests[0] == srv.requests[1]
    assert a.estimates == b.estimates == window.targets
