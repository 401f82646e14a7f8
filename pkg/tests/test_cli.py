import io
import json
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from deblurkit.blursynth import add_noise, convolve, gaussian_kernel, save_kernel
from deblurkit.cli import main
from deblurkit.imagecore import load_image, save_image

from conftest import make_blobs, make_texture


def run_cli(argv):
    """Invoke the CLI in-process, capturing stdout/stderr."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = main(argv)
    return rc, out.getvalue(), err.getvalue()


def write_pair(tmp_path, sharp, blur):
    sp, bp = tmp_path / "sharp.png", tmp_path / "blur.png"
    save_image(sharp, sp)
    save_image(blur, bp)
    return str(sp), str(bp)


# ---------------------------------------------------------------- plumbing


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        run_cli(["--help"])
    assert exc.value.code == 0


def test_missing_required_args_exit_two():
    with pytest.raises(SystemExit) as exc:
        run_cli(["estimate", "--sharp", "a.png"])
    assert exc.value.code == 2


def test_unknown_subcommand_exits_two():
    with pytest.raises(SystemExit) as exc:
        run_cli(["frobnicate"])
    assert exc.value.code == 2


def test_missing_input_file_exits_one(tmp_path):
    rc, _, err = run_cli(
        ["eval", "--pred", str(tmp_path / "no.png"), "--ref", str(tmp_path / "no.png")]
    )
    assert rc == 1
    assert "error:" in err


def test_console_script_installed(tmp_path):
    img = make_texture(0, size=32)
    p = tmp_path / "a.png"
    save_image(img, p)
    proc = subprocess.run(
        [sys.executable, "-m", "deblurkit.cli", "eval", "--pred", str(p), "--ref", str(p)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith(str(p) + "\t")


# ------------------------------------------------------------------- synth


def _stack_dir(tmp_path, n, size=64):
    d = tmp_path / "stacks"
    d.mkdir()
    for i in range(n):
        save_image(make_texture(100 + i, size=size), d / f"stack{i}.png")
    return str(d)


def test_synth_gaussian_counts(tmp_path):
    stacks = _stack_dir(tmp_path, 2)
    out = tmp_path / "ds"
    rc, stdout, _ = run_cli(
        [
            "synth",
            "--stacks",
            stacks,
            "--out",
            str(out),
            "--mode",
            "gaussian",
            "--sigma-min",
            "1.0",
            "--sigma-max",
            "3.0",
            "--sigma-count",
            "4",
            "--patch",
            "32",
            "--stride",
            "32",
        ]
    )
    assert rc == 0
    # 2 stacks x 4 kernels, 4 non-overlapping 32px patches per 64px image
    assert stdout.startswith("8 blurred images, 32 pairs")
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["pairs"]) == 32


def test_synth_gaussian_no_augment_by_default(tmp_path):
    stacks = _stack_dir(tmp_path, 1)
    rc, stdout, _ = run_cli(
        ["synth", "--stacks", stacks, "--out", str(tmp_path / "d"), "--mode",
         "gaussian", "--sigma-count", "2", "--sigma-max", "3.0"]
    )
    assert rc == 0
    assert stdout.startswith("2 blurred images")


def test_synth_estimated_augments_eightfold(tmp_path):
    stacks = _stack_dir(tmp_path, 2)
    kdir = tmp_path / "kernels"
    kdir.mkdir()
    for i, sigma in enumerate((1.0, 1.5, 2.0)):
        save_kernel(gaussian_kernel(sigma), kdir / f"k{i}.kern")
    rc, stdout, _ = run_cli(
        [
            "synth",
            "--stacks",
            stacks,
            "--out",
            str(tmp_path / "d"),
            "--mode",
            "estimated",
            "--kernel-dir",
            str(kdir),
        ]
    )
    assert rc == 0
    # 2 stacks x 8 dihedral variants x 3 kernels
    assert stdout.startswith("48 blurred images")


def test_synth_estimated_augment_can_be_disabled(tmp_path):
    stacks = _stack_dir(tmp_path, 1)
    kdir = tmp_path / "kernels"
    kdir.mkdir()
    save_kernel(gaussian_kernel(1.0), kdir / "k.kern")
    rc, stdout, _ = run_cli(
        ["synth", "--stacks", stacks, "--out", str(tmp_path / "d"), "--mode",
         "estimated", "--kernel-dir", str(kdir), "--no-augment"]
    )
    assert rc == 0
    assert stdout.startswith("1 blurred images")


def test_synth_estimated_requires_kernel_dir(tmp_path):
    stacks = _stack_dir(tmp_path, 1)
    rc, _, err = run_cli(
        ["synth", "--stacks", stacks, "--out", str(tmp_path / "d"), "--mode", "estimated"]
    )
    assert rc == 1
    assert "--kernel-dir" in err


def test_synth_empty_stack_dir_exits_one(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    rc, _, err = run_cli(
        ["synth", "--stacks", str(d), "--out", str(tmp_path / "o"), "--mode", "gaussian"]
    )
    assert rc == 1
    assert "no raster images" in err


# ---------------------------------------------------------------- estimate


def test_estimate_recovers_13px_kernel_size(tmp_path):
    # mid-roughness texture keeps both failure modes at bay: smooth content
    # can't discriminate kernel support, white noise overfits quantization
    sharp = make_texture(3, size=128, smooth=0.5)
    blur = convolve(sharp, gaussian_kernel(2.0))
    sp, bp = write_pair(tmp_path, sharp, blur)
    out = tmp_path / "bank"
    rc, stdout, _ = run_cli(["estimate", "--sharp", sp, "--blur", bp, "--out", str(out)])
    assert rc == 0
    assert stdout.startswith("shift (0, 0), 9 estimates")

    report = json.loads((out / "report.json").read_text())
    medium = [e for e in report["estimates"] if e["category"] == "medium"]
    assert medium
    best = min(medium, key=lambda e: e["fit_mse"])
    assert best["size"] == 13


def test_estimate_denoise_lowers_reported_fit(tmp_path):
    sharp = make_blobs(19, size=64, n_blobs=3, width=2.0)
    noisy = add_noise(convolve(sharp, gaussian_kernel(2.0)), 0.06, seed=1019)
    sp, bp = write_pair(tmp_path, sharp, noisy)

    fits = {}
    for flag in ((), ("--denoise",)):
        out = tmp_path / f"bank{len(flag)}"
        rc, _, _ = run_cli(
            ["estimate", "--sharp", sp, "--blur", bp, "--out", str(out),
             "--min-size", "11", "--max-size", "15", *flag]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["denoised"] is bool(flag)
        fits[bool(flag)] = report["fit_mse"]
    # both runs are rescored against the original blurry frame
    assert fits[True] <= fits[False]


def test_estimate_writes_kernel_files(tmp_path):
    sharp = make_texture(4, size=64, smooth=0.5)
    blur = convolve(sharp, gaussian_kernel(1.0))
    sp, bp = write_pair(tmp_path, sharp, blur)
    out = tmp_path / "bank"
    rc, _, _ = run_cli(
        ["estimate", "--sharp", sp, "--blur", bp, "--out", str(out),
         "--min-size", "5", "--max-size", "9", "--top", "1"]
    )
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert (out / "kernels").is_dir()
    for entry in report["estimates"]:
        assert (out / entry["kernel_path"]).is_file()
    for rel in report["selected"]:
        assert (out / rel).is_file()


def test_estimate_registers_translation(tmp_path):
    sharp = make_texture(5, size=128, smooth=0.5)
    blur = convolve(sharp, gaussian_kernel(2.0))
    shifted = np.roll(blur, (3, -2), axis=(0, 1))
    sp, bp = write_pair(tmp_path, sharp, shifted)
    rc, stdout, _ = run_cli(
        ["estimate", "--sharp", sp, "--blur", bp, "--out", str(tmp_path / "bank")]
    )
    assert rc == 0
    assert stdout.startswith("shift (3, -2)")


# ------------------------------------------------------------ train/infer


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    stacks = root / "stacks"
    stacks.mkdir()
    for i in range(2):
        save_image(make_texture(200 + i, size=64), stacks / f"s{i}.png")
    out = root / "data"
    rc, _, _ = run_cli(
        ["synth", "--stacks", str(stacks), "--out", str(out), "--mode", "gaussian",
         "--sigma-min", "1.0", "--sigma-max", "2.0", "--sigma-count", "2",
         "--patch", "16", "--stride", "16"]
    )
    assert rc == 0
    return out / "manifest.json"


def test_train_writes_checkpoint_and_report(tmp_path, small_dataset):
    ckpt = tmp_path / "model.ckpt"
    rc, stdout, _ = run_cli(
        ["train", "--manifest", str(small_dataset), "--out", str(ckpt),
         "--blocks", "1", "--epochs", "1", "--batch", "4", "--max-steps", "2"]
    )
    assert rc == 0
    assert "done: 2 steps" in stdout
    assert ckpt.is_file()
    report = json.loads((ckpt.parent / (ckpt.name + ".report.json")).read_text())
    assert report["total_steps"] == 2
    assert report["net_config"]["num_rrdb"] == 1
    assert report["checkpoint_path"] == str(ckpt)


@pytest.mark.filterwarnings("ignore:overflow")
def test_train_nonfinite_loss_exits_three(tmp_path, small_dataset):
    rc, _, err = run_cli(
        ["train", "--manifest", str(small_dataset), "--out", str(tmp_path / "m.ckpt"),
         "--blocks", "1", "--epochs", "2", "--batch", "4", "--lr", "1e38",
         "--max-steps", "8"]
    )
    if rc == 0:  # pragma: no cover - blow-up is expected at this lr
        pytest.skip("training stayed finite at lr=1e38")
    assert rc == 3
    assert "error:" in err


def test_infer_roundtrip(tmp_path, small_dataset):
    ckpt = tmp_path / "model.ckpt"
    rc, _, _ = run_cli(
        ["train", "--manifest", str(small_dataset), "--out", str(ckpt),
         "--blocks", "1", "--epochs", "1", "--batch", "4", "--max-steps", "1"]
    )
    assert rc == 0

    src = tmp_path / "in.png"
    save_image(make_texture(9, size=64), src)
    dst = tmp_path / "out.png"
    rc, stdout, _ = run_cli(
        ["infer", "--input", str(src), "--ckpt", str(ckpt), "--out", str(dst)]
    )
    assert rc == 0
    assert stdout.strip() == str(dst)
    result = load_image(dst)
    assert result.shape == (64, 64)
    assert result.min() >= 0.0 and result.max() <= 1.0


def test_infer_stretch_flag(tmp_path, small_dataset):
    ckpt = tmp_path / "model.ckpt"
    run_cli(
        ["train", "--manifest", str(small_dataset), "--out", str(ckpt),
         "--blocks", "1", "--epochs", "1", "--batch", "4", "--max-steps", "1"]
    )
    src = tmp_path / "in.png"
    save_image(make_texture(10, size=64), src)
    dst = tmp_path / "out.png"
    rc, _, _ = run_cli(
        ["infer", "--input", str(src), "--ckpt", str(ckpt), "--out", str(dst),
         "--stretch"]
    )
    assert rc == 0
    arr = np.asarray(load_image(dst) * 255.0).round()
    assert arr.min() == 0 and arr.max() == 255


# -------------------------------------------------------------------- eval


def test_eval_identical_images_reports_inf(tmp_path):
    p = tmp_path / "a.png"
    save_image(make_texture(1, size=32), p)
    rc, stdout, _ = run_cli(["eval", "--pred", str(p), "--ref", str(p)])
    assert rc == 0
    path, m, p_str, s = stdout.strip().split("\t")
    assert path == str(p)
    assert float(m) == 0.0
    assert p_str == "inf"
    assert s == "1.0000"


def test_eval_reports_finite_psnr(tmp_path):
    a = make_texture(2, size=32)
    b = np.clip(a + 0.1, 0.0, 1.0)
    pa, pb = tmp_path / "a.png", tmp_path / "b.png"
    save_image(a, pa)
    save_image(b, pb)
    rc, stdout, _ = run_cli(["eval", "--pred", str(pa), "--ref", str(pb)])
    assert rc == 0
    _, m, p_str, s = stdout.strip().split("\t")
    assert float(m) > 0.0
    assert 0.0 < float(p_str) < 100.0
    assert 0.0 < float(s) <= 1.0
