import csv
import io

import numpy as np
import pytest

from tdiht.experiments import (
    MriRunSpec,
    PhaseGridSpec,
    cell_dimensions,
    denoising_ensemble,
    grid_values,
    run_mri,
    run_phase_cell,
    run_phase_grid,
    worker_count,
)
from tdiht.linops import SamplingMask, radial_mask
from tdiht.recovery import ConstantStep, HaltingRule
from tdiht.signals import NoiseSpec, shepp_logan


def test_grid_values():
    assert grid_values(4).tolist() == [0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        grid_values(0)


def test_cell_dimensions():
    spec = PhaseGridSpec(d=120, p=144)
    assert cell_dimensions(spec, 1.0, 0.05) == (120, 114, 30)
    assert cell_dimensions(spec, 0.8, 1.0) == (96, 24, 120)
    # tiny products still leave one measurement and one free dimension
    m, ell, k = cell_dimensions(PhaseGridSpec(d=10, p=12), 0.01, 0.01)
    assert (m, ell, k) == (1, 9, 3)


def test_spec_validation():
    with pytest.raises(ValueError):
        PhaseGridSpec(algorithm="bogus")
    with pytest.raises(ValueError):
        PhaseGridSpec(d=10, p=8)
    with pytest.raises(ValueError):
        PhaseGridSpec(delta_values=(0.0,))
    with pytest.raises(ValueError):
        PhaseGridSpec(d=10, p=12, identity_frame=True)


@pytest.mark.parametrize("algorithm", ["tdiht", "iht", "aiht"])
@pytest.mark.parametrize("rho", [0.1, 0.5, 1.0])
def test_identity_diagnostic(algorithm, rho):
    spec = PhaseGridSpec(d=20, p=20, trials=5, algorithm=algorithm, step_rule=ConstantStep(1.0),
                         identity_measurements=True, identity_frame=True, seed=2)
    assert run_phase_cell(spec, 1.0, rho).success_rate == 1.0


def test_corner_cell_succeeds():
    spec = PhaseGridSpec(d=120, p=144, trials=20, seed=0)
    assert run_phase_cell(spec, 1.0, 0.05).success_rate == 1.0


def test_one_by_one_grid_is_a_cell():
    spec = PhaseGridSpec(d=30, p=36, delta_values=(0.7,), rho_values=(0.2,), trials=4, seed=9)
    grid = run_phase_grid(spec, threads=1)
    cell = run_phase_cell(spec, 0.7, 0.2)
    assert grid.success_rate.shape == (1, 1)
    assert grid.success_rate[0, 0] == cell.success_rate
    assert grid.mean_iterations[0, 0] == cell.mean_iterations


def test_grid_deterministic_across_threads(monkeypatch):
    spec = PhaseGridSpec(d=30, p=36, delta_values=(0.5, 1.0), rho_values=(0.2, 0.6), trials=3, seed=4)
    a = run_phase_grid(spec, threads=1)
    b = run_phase_grid(spec, threads=4)
    monkeypatch.setenv("COSPARSE_THREADS", "2")
    c = run_phase_grid(spec)
    assert a.to_csv() == b.to_csv() == c.to_csv()


def test_grid_csv_format():
    spec = PhaseGridSpec(d=20, p=24, delta_values=(0.5, 1.0), rho_values=(1 / 3,), trials=2, seed=1)
    text = run_phase_grid(spec, threads=1).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["delta", "rho", "success_rate", "mean_iterations"]
    assert len(rows) == 3
    assert rows[1][:2] == ["0.5", "0.333333"]
    for row in rows[1:]:
        assert 0 <= float(row[2]) <= 1


def test_success_non_decreasing_in_measurements():
    trials = 10
    spec = PhaseGridSpec(d=40, p=48, delta_values=tuple(grid_values(5)), rho_values=(0.2, 0.4),
                         trials=trials, seed=3)
    rate = run_phase_grid(spec).success_rate
    for row in rate:
        assert np.all(np.diff(row) >= -2 / trials)


def test_success_non_increasing_in_rho():
    trials = 10
    spec = PhaseGridSpec(d=40, p=48, delta_values=(0.8,), rho_values=(0.1, 0.4, 0.7, 1.0),
                         trials=trials, seed=5)
    rate = run_phase_grid(spec).success_rate[:, 0]
    assert np.all(np.diff(rate) <= 2 / trials)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("COSPARSE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("COSPARSE_THREADS", "nope")
    assert worker_count() >= 1


# ---------------------------------------------------------------------------
# image recovery


def _textured(n):
    rng = np.random.default_rng(0)
    return np.clip(shepp_logan(n) + 0.05 * rng.random((n, n)), 0, 1)


def test_full_mask_reaches_model_error():
    n = 32
    spec = MriRunSpec(image=_textured(n), mask=SamplingMask(np.ones((n, n), bool)), threshold=0.05)
    res = run_mri(spec)
    assert res.model_error_psnr < 100
    assert res.psnr >= res.model_error_psnr - 0.1


def test_mri_small_phantom_and_report():
    spec = MriRunSpec(image=shepp_logan(64), mask=radial_mask(64, 30), threshold=0.01, seed=3)
    res = run_mri(spec)
    assert res.psnr >= 60
    assert res.naive_psnr < res.psnr
    assert set(res.report()) == {"psnr", "naive_psnr", "model_error_psnr", "k",
                                 "measurements", "iterations", "seed"}
    assert res.measurements == radial_mask(64, 30).count


def test_mri_noise_is_seeded():
    kw = dict(image=shepp_logan(32), mask=radial_mask(32, 20), threshold=0.05,
              noise=NoiseSpec.target_snr(20), halting=HaltingRule(100))
    a = run_mri(MriRunSpec(seed=1, **kw))
    b = run_mri(MriRunSpec(seed=1, **kw))
    c = run_mri(MriRunSpec(seed=2, **kw))
    assert np.array_equal(a.recon, b.recon)
    assert not np.array_equal(a.recon, c.recon)


def test_mri_naive_scale():
    kw = dict(image=shepp_logan(32), mask=radial_mask(32, 8), halting=HaltingRule(2))
    plain = run_mri(MriRunSpec(**kw))
    scaled = run_mri(MriRunSpec(naive_scale=2.0, **kw))
    assert np.allclose(scaled.naive, 2 * plain.naive)


def test_mri_validation():
    with pytest.raises(ValueError):
        MriRunSpec(image=np.zeros((8, 8)), mask=radial_mask(16, 3))
    with pytest.raises(ValueError):
        MriRunSpec(image=np.zeros((8, 8)), mask=radial_mask(8, 3), algorithm="aiht")


def test_denoising_ensemble_small():
    out = denoising_ensemble(d=40, p=48, m=36, ell=36, trials=10, seed=1)
    assert out["trials"] == 10
    assert out["ratio"] == pytest.approx(out["mean_squared_error"] / out["mean_noise_power"])
    assert out["ratio"] < 1
