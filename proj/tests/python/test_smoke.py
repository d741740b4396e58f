import math

import numpy as np
import pytest

import prnf

prnf.set_workers(2)


def test_generate_pairs_shapes_and_determinism():
    x0, xt, t_final = prnf.generate_pairs("sqrt1d", {}, n=200, dt=0.005, seed=42)
    assert x0.shape == (200, 1)
    assert xt.shape == (200, 1)
    assert t_final == pytest.approx(0.1)
    assert np.all(x0 >= 0.0) and np.all(x0 <= 5.0)
    x0b, xtb, _ = prnf.generate_pairs("sqrt1d", {}, n=200, dt=0.005, seed=42)
    np.testing.assert_array_equal(x0, x0b)
    np.testing.assert_array_equal(xt, xtb)


def test_unknown_problem_raises():
    with pytest.raises(Exception, match="sqrt1d"):
        prnf.generate_pairs("not_a_problem", {}, n=10)


def test_analytic_pdf_normalizes():
    xs = np.linspace(1e-6, 30.0, 20001)
    pdf = np.array([prnf.analytic_pdf_1d(float(x), 2.0, 0.1) for x in xs])
    assert np.trapezoid(pdf, xs) == pytest.approx(1.0, abs=1e-4)


def test_analytic_solution_10d_identity():
    x0 = np.linspace(0.1, 1.0, 10)
    out = prnf.analytic_solution_10d(x0, 0.0, 0.0)
    np.testing.assert_allclose(out, x0, rtol=0, atol=0)


def test_train_and_sample_roundtrip(tmp_path):
    x0, xt, t_final = prnf.generate_pairs("sqrt1d", {}, n=500, dt=0.01, seed=7)
    model, report = prnf.train(
        x0, xt, t_final, hidden=[16], lam=10.0, epochs=40, batch_size=100, seed=3
    )
    assert not report["aborted"]
    assert len(report["L"]) == 40
    assert report["L"][-1] < report["L"][0]

    samples = model.sample_conditional(np.array([2.0]), n=256, seed=5)
    assert samples.shape == (256, 1)
    again = model.sample_conditional(np.array([2.0]), n=256, seed=5)
    np.testing.assert_array_equal(samples, again)

    logp = model.log_density(np.array([[2.0]]), np.array([[2.2]]))
    assert logp.shape == (1,)
    assert math.isfinite(logp[0])

    z0, zt = model.map_forward(np.array([2.0]), np.array([2.2]))
    np.testing.assert_array_equal(z0, np.array([2.0]))
    xh0, _ = model.map_inverse(z0, zt)
    np.testing.assert_array_equal(xh0, np.array([2.0]))

    path = str(tmp_path / "model.prnm")
    model.save(path)
    back = prnf.load_model(path)
    assert back.d == 1
    np.testing.assert_array_equal(
        back.sample_conditional(np.array([2.0]), n=16, seed=1),
        model.sample_conditional(np.array([2.0]), n=16, seed=1),
    )


def test_dataset_file_roundtrip(tmp_path):
    x0, xt, t_final = prnf.generate_pairs("sqrt1d", {}, n=50, dt=0.01, seed=1)
    path = str(tmp_path / "pairs.prnf")
    prnf.save_dataset(path, x0, xt, t_final)
    rx0, rxt, rt = prnf.load_dataset(path)
    np.testing.assert_array_equal(rx0, x0)
    np.testing.assert_array_equal(rxt, xt)
    assert rt == t_final


def test_kl_divergence_callable():
    rng = np.random.default_rng(0)
    samples = rng.normal(size=20000).tolist()
    grid = np.linspace(-6, 6, 300)
    kl = prnf.kl_divergence_1d(
        lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), samples, grid
    )
    assert 0.0 <= kl < 0.02
