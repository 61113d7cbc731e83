import numpy as np
import pytest

from rldenoise import io as rio
from rldenoise.agents import IDENTITY_ACTION, build_agent
from rldenoise.ct import desk_geometry, forward_project, make_phantom
from rldenoise.ct.volume import Volume
from rldenoise.data import DenoiseCase, build_case, mask_outside_fov
from rldenoise.pipeline import (ABLATION_MODES, PipelineConfig,
                                PipelineInstrument, RunReport,
                                convergence_experiment, denoise_volume,
                                desk_pipeline_config, evaluate_case,
                                run_ablation, summarize, write_report_csv,
                                write_rows_csv, write_steps_csv)

GEOM = desk_geometry()


class StubAgent:
    """Protocol-compatible agent preferring one fixed action index."""

    def __init__(self, kind: str, best: int = IDENTITY_ACTION):
        self.kind = kind
        self.best = best
        self.calls = 0

    def set_noise_mode(self, mode):
        pass

    def expected_qs(self, states):
        self.calls += 1
        n = np.asarray(states).shape[0]
        q = np.zeros((n, 5))
        q[:, self.best] = 1.0
        return q, q.copy()


@pytest.fixture(scope="module")
def small_case():
    return build_case("ellipsoids", seed=21, geom=GEOM, n_views=16,
                      extents=(24, 24, 24))


def _cfg(**kw):
    base = dict(n_views=16, tuning_steps=2, vol_action_stride=8, seed=3)
    base.update(kw)
    return PipelineConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(ablation="bogus")
    with pytest.raises(ValueError):
        PipelineConfig(init_mode="bogus")
    with pytest.raises(ValueError):
        PipelineConfig(vol_action_stride=0)
    assert desk_pipeline_config().vol_action_stride == 4


def test_agent_kind_mismatch_detected(small_case):
    with pytest.raises(ValueError):
        denoise_volume(small_case.noisy, StubAgent("vol"), StubAgent("vol"),
                       _cfg(), GEOM)


def test_pipeline_refilters_the_original_each_step(small_case):
    inst = PipelineInstrument()
    den, rep = denoise_volume(small_case.noisy, StubAgent("sin", best=4),
                              StubAgent("vol", best=4), _cfg(), GEOM,
                              instrument=inst)
    assert rep.filter_calls == {"sin": 2, "vol": 2}
    assert len(set(inst.input_hashes["sin"])) == 1
    assert len(set(inst.input_hashes["vol"])) == 1
    assert den.values.shape == small_case.noisy.values.shape


def test_identity_actions_leave_widths_at_init(small_case):
    den, rep = denoise_volume(small_case.noisy, StubAgent("sin"),
                              StubAgent("vol"), _cfg(), GEOM)
    sin_rows = [s for s in rep.steps if s["domain"] == "sin"]
    assert all(s["sigma_i_mean"] == 3.0 for s in sin_rows)
    vol_rows = [s for s in rep.steps if s["domain"] == "vol"]
    assert all(s["sigma_i_mean"] == 13.0 for s in vol_rows)


def test_ablation_filter_call_counts(small_case):
    outcomes = {}
    for mode in ABLATION_MODES:
        _, rep = denoise_volume(small_case.noisy, StubAgent("sin"),
                                StubAgent("vol"), _cfg(ablation=mode), GEOM)
        outcomes[mode] = dict(rep.filter_calls)
    assert outcomes["none"] == {"sin": 2, "vol": 2}
    assert outcomes["fixed-sin"] == {"sin": 1, "vol": 2}
    assert outcomes["fixed-vol"] == {"sin": 2, "vol": 1}
    assert outcomes["fixed-both"] == {"sin": 1, "vol": 1}
    assert outcomes["only-sin"] == {"sin": 2, "vol": 0}
    assert outcomes["only-vol"] == {"sin": 0, "vol": 2}


def test_only_vol_skips_projection(small_case):
    sin = StubAgent("sin")
    den, rep = denoise_volume(small_case.noisy, sin, StubAgent("vol"),
                              _cfg(ablation="only-vol"), GEOM)
    assert sin.calls == 0
    assert "project_s" not in rep.timings


def test_denoise_deterministic_bitwise(small_case, tmp_path):
    sin_net = build_agent("sin", seed=31)
    vol_net = build_agent("vol", seed=32)
    outs = []
    reports = []
    for _ in range(2):
        den, rep = denoise_volume(small_case.noisy, sin_net, vol_net,
                                  _cfg(init_mode="random"), GEOM,
                                  reference=small_case.reference,
                                  case_name="case")
        outs.append(den.values)
        reports.append(rep)
    assert np.array_equal(outs[0], outs[1])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report_csv(a, [reports[0]])
    write_report_csv(b, [reports[1]])
    assert a.read_bytes() == b.read_bytes()
    sa, sb = tmp_path / "sa.csv", tmp_path / "sb.csv"
    write_steps_csv(sa, [reports[0]])
    write_steps_csv(sb, [reports[1]])
    assert sa.read_bytes() == sb.read_bytes()


def test_report_metrics_filled_with_reference(small_case):
    _, rep = denoise_volume(small_case.noisy, StubAgent("sin"),
                            StubAgent("vol"), _cfg(), GEOM,
                            reference=small_case.reference)
    for v in (rep.psnr_before, rep.psnr_after, rep.ssim_before, rep.ssim_after):
        assert np.isfinite(v)
    assert 0.0 < rep.ssim_before <= 1.0


def test_mask_outside_fov_clears_corners(small_case):
    vol = small_case.phantom
    masked = mask_outside_fov(vol, GEOM)
    assert masked.values[0, 0, 12] == -1000.0
    center = tuple(n // 2 for n in vol.extents)
    assert masked.values[center] == vol.values[center]


def test_evaluate_case_crops_air(small_case):
    den = Volume(small_case.noisy.values.copy(), small_case.noisy.spacing, "hu")
    row = evaluate_case(den, small_case)
    assert row["psnr_before"] == row["psnr_after"]
    assert row["ssim_before"] == row["ssim_after"]
    assert np.isfinite(row["psnr_before"])


def test_summarize_means_and_stds():
    rows = [{"psnr_before": 10.0, "psnr_after": 12.0, "ssim_before": 0.5,
             "ssim_after": 0.7},
            {"psnr_before": 14.0, "psnr_after": 18.0, "ssim_before": 0.6,
             "ssim_after": 0.9}]
    s = summarize(rows)
    assert s["psnr_before_mean"] == 12.0
    assert s["psnr_after_mean"] == 15.0
    assert s["ssim_after_std"] == pytest.approx(0.1)


def test_run_ablation_rows(small_case):
    rows = run_ablation(["none", "fixed-both"], [small_case],
                        StubAgent("sin"), StubAgent("vol"), _cfg(), GEOM)
    assert [r["mode"] for r in rows] == ["none", "fixed-both"]
    for r in rows:
        assert r["n_cases"] == 1
        assert np.isfinite(r["psnr_after_mean"])


def test_run_ablation_skips_missing_alt_nets(small_case):
    rows = run_ablation(["no-reward-net"], [small_case], StubAgent("sin"),
                        StubAgent("vol"), _cfg(), GEOM)
    assert rows == []


def test_convergence_rows_and_default_marker(small_case):
    rows, meta = convergence_experiment(
        small_case.noisy, StubAgent("sin"), StubAgent("vol"), _cfg(), GEOM,
        small_case.reference, steps=2, init_modes=("min", "middle"))
    assert meta["default_init"] == "middle"
    assert {r["init"] for r in rows} == {"min", "middle"}
    assert {r["domain"] for r in rows} == {"sin", "vol"}
    assert len(rows) == 2 * 2 * 2
    for r in rows:
        assert np.isfinite(r["psnr"]) and np.isfinite(r["ssim"])


def test_write_rows_csv(tmp_path):
    rows = [{"b": 1, "a": 2.5}, {"a": 1.0, "c": "x"}]
    path = tmp_path / "rows.csv"
    write_rows_csv(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == "a,b,c"
    assert len(text) == 3
    with pytest.raises(ValueError):
        write_rows_csv(tmp_path / "empty.csv", [])


def test_io_roundtrip_and_validation(tmp_path, small_case):
    vpath = str(tmp_path / "vol.raw")
    rio.save_volume(vpath, small_case.noisy)
    back = rio.load_volume(vpath)
    assert back.spacing == small_case.noisy.spacing
    assert back.units == "hu"
    assert np.allclose(back.values,
                       small_case.noisy.values.astype(np.float32))
    sino = forward_project(mask_outside_fov(small_case.phantom, GEOM), GEOM, 4)
    spath = str(tmp_path / "sino.raw")
    rio.save_sinogram(spath, sino)
    back_s = rio.load_sinogram(spath)
    assert np.allclose(back_s.angles, sino.angles)
    with pytest.raises(ValueError):
        rio.load_volume(spath)
    # truncated payload
    data = open(vpath, "rb").read()
    open(vpath, "wb").write(data[:-8])
    with pytest.raises(ValueError):
        rio.load_volume(vpath)


def test_reports_dataclass_defaults():
    rep = RunReport("x", "none", "middle", 10, 180, 1)
    assert np.isnan(rep.psnr_before)
    assert rep.filter_calls == {"sin": 0, "vol": 0}
