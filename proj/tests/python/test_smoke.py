import math

import numpy as np
import pytest

import ssm_sgmcmc as sg


@pytest.fixture(scope="module")
def arhmm():
    star = sg.synthetic_params("arhmm")
    data = sg.simulate(star, 400, seed=1)
    return star, data


def test_simulate_shapes(arhmm):
    star, data = arhmm
    assert data["obs"].shape == (400, 2)
    assert len(data["z"]) == 400
    assert set(data["z"]) <= {0, 1}


def test_gradients_agree_when_buffer_covers_the_sequence(arhmm):
    star, data = arhmm
    obs = data["obs"]
    full = sg.full_gradient(star, obs)
    whole = sg.buffered_gradient(star, obs, start=0, S=400, B=0)
    assert full.keys() == whole.keys()
    for name in full:
        np.testing.assert_allclose(full[name], whole[name], rtol=1e-12, atol=1e-12)


def test_loglik_and_heldout(arhmm):
    star, data = arhmm
    ll = sg.marginal_loglik(star, data["obs"])
    assert math.isfinite(ll)
    assert sg.heldout_loglik(star, data["obs"]) == pytest.approx(ll)
    # One-step predictions cover y_1 onwards.
    first = sg.marginal_loglik(star, data["obs"][:1])
    assert sg.predictive_k_step(star, data["obs"], 1) == pytest.approx(ll - first, rel=1e-9)


def test_chain_is_seeded(arhmm):
    star, data = arhmm
    init = sg.init_params("arhmm", data["obs"], 2, seed=3)
    cfg = {"kind": "sgrld", "h": 1e-3, "S": 5, "B": 2, "n_steps": 10, "clock": "step"}
    a = sg.run_chain(data["obs"], init, cfg, seed=7)
    b = sg.run_chain(data["obs"], init, cfg, seed=7)
    assert a["error"] == ""
    assert len(a["samples"]) == 11
    assert a["samples"] == b["samples"]


def test_metrics(arhmm):
    star, _ = arhmm
    mse = sg.param_mse(star, star)
    assert mse["total"] == pytest.approx(0.0, abs=1e-14)
    assert sg.imq_kernel(np.zeros(3), np.ones(3)) == 0.5
    assert sg.nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)


def test_invalid_input_raises(arhmm):
    star, data = arhmm
    with pytest.raises(ValueError):
        sg.buffered_gradient(star, data["obs"], start=0, S=500, B=0)


def test_pipeline(tmp_path):
    cfg = {"data": {"synthetic": "arhmm", "T": 300, "test_T": 100}, "seed": 4, "out_dir": str(tmp_path),
           "sampler": {"n_steps": 5, "S": 5, "B": 1, "clock": "step"}, "metrics": ["heldout"]}
    files = sg.cmd_generate(cfg)
    assert (tmp_path / "obs.csv").exists()
    traces = sg.cmd_fit(cfg)
    rows = sg.cmd_eval(cfg, traces[0])
    assert {r["block"] for r in rows} >= {"sample", "truth"}
    curve = sg.cmd_grad_error({**cfg, "truth": files["truth"], "grad_error": {"S": [4], "B": [0, 2], "n_trials": 5}})
    assert len(curve) == 2
