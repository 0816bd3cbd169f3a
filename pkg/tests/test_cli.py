import numpy as np
import pytest

from resdiff import ppm
from resdiff.cli import main
from resdiff.codec.bitstream import pack_header
from resdiff.corpus import generate_image, write_corpus
from resdiff.nn.checkpoint import Checkpoint, save_checkpoint
from resdiff.nn.denoiser import DenoiserConfig, init_model
from resdiff.schedule import make_linear


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    write_corpus(d, count=4, size=32, seed=7)
    return d


@pytest.fixture(scope="module")
def zero_head_checkpoint(tmp_path_factory):
    """Untrained model: zero output head, linear-1000 schedule."""
    path = tmp_path_factory.mktemp("ck") / "zero.ckpt"
    schedule = make_linear(1000, 1e-4, 0.02)
    cfg = DenoiserConfig(width=8, temb_dim=16, sin_dim=8, groups=4)
    ck = Checkpoint(
        params=init_model(cfg, seed=0),
        config=cfg,
        schedule_spec=schedule.spec,
        train_config={},
        seed=0,
    )
    save_checkpoint(path, ck)
    return path


@pytest.fixture()
def image_file(tmp_path):
    path = tmp_path / "img.ppm"
    ppm.write_ppm(path, generate_image(7, 0))
    return path


class TestMakeCorpus:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["make-corpus", "--out", str(a), "--count", "3"]) == 0
        assert main(["make-corpus", "--out", str(b), "--count", "3"]) == 0
        for pa, pb in zip(sorted(a.iterdir()), sorted(b.iterdir())):
            assert pa.read_bytes() == pb.read_bytes()


class TestEncodeDecode:
    def test_round_trip_dimensions(self, tmp_path, image_file, capsys):
        bs = tmp_path / "x.rdc"
        out = tmp_path / "x_hat.ppm"
        assert main(["encode", "--input", str(image_file), "--out", str(bs)]) == 0
        assert main(["decode", "--input", str(bs), "--out", str(out)]) == 0
        assert ppm.read_ppm(out).shape == ppm.read_ppm(image_file).shape

    def test_bpp_printout_matches_payload(self, tmp_path, image_file, capsys):
        bs = tmp_path / "x.rdc"
        assert (
            main(["encode", "--input", str(image_file), "--out", str(bs), "--rate", "0.5"])
            == 0
        )
        printed = capsys.readouterr().out
        bpp_line = [l for l in printed.splitlines() if l.startswith("bpp")][0]
        from resdiff.codec.bitstream import unpack_header

        header = unpack_header(bs.read_bytes())
        expected = 8 * len(header.payload) / (64 * 64)
        assert bpp_line == f"bpp {expected:.4f}"

    def test_bundled_golden_bpp(self, tmp_path, image_file, capsys):
        # frozen after the first run: corpus image 0 at the middle rate
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs), "--rate", "0.5"])
        out = capsys.readouterr().out
        assert "bpp 1.7012" in out

    def test_encode_deterministic(self, tmp_path, image_file):
        a = tmp_path / "a.rdc"
        b = tmp_path / "b.rdc"
        main(["encode", "--input", str(image_file), "--out", str(a)])
        main(["encode", "--input", str(image_file), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_decode_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.rdc"
        bad.write_bytes(b"not a bitstream")
        assert main(["decode", "--input", str(bad), "--out", str(tmp_path / "x.ppm")]) == 3


class TestTrainCommand:
    def test_missing_corpus_names_path(self, tmp_path, capsys):
        rc = main(
            ["train", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "m.ckpt")]
        )
        assert rc == 2
        assert "nope" in capsys.readouterr().err

    def test_smoke_train_writes_outputs(self, tmp_path, small_corpus):
        out = tmp_path / "m.ckpt"
        rc = main(
            [
                "train",
                "--corpus",
                str(small_corpus),
                "--out",
                str(out),
                "--steps",
                "4",
                "--width",
                "8",
                "--config",
                str(_write_tiny_config(tmp_path)),
            ]
        )
        assert rc == 0
        assert out.exists()
        loss_csv = out.with_suffix(".loss.csv")
        lines = loss_csv.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 5

    def test_same_seed_identical_checkpoints(self, tmp_path, small_corpus):
        cfg = _write_tiny_config(tmp_path)
        outs = []
        for name in ("a.ckpt", "b.ckpt"):
            out = tmp_path / name
            assert (
                main(
                    [
                        "train",
                        "--corpus",
                        str(small_corpus),
                        "--out",
                        str(out),
                        "--steps",
                        "3",
                        "--width",
                        "8",
                        "--seed",
                        "5",
                        "--config",
                        str(cfg),
                    ]
                )
                == 0
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_config_key_rejected(self, tmp_path, small_corpus, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("budgie.kind = linear\n")
        rc = main(
            [
                "train",
                "--corpus",
                str(small_corpus),
                "--out",
                str(tmp_path / "m.ckpt"),
                "--config",
                str(cfg),
            ]
        )
        assert rc == 2
        assert "unknown key" in capsys.readouterr().err


def _write_tiny_config(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    if not cfg.exists():
        cfg.write_text(
            "train.crop = 16\n"
            "train.batch_size = 2\n"
            "model.width = 8\n"
            "model.temb_dim = 16\n"
            "model.sin_dim = 8\n"
            "model.groups = 4\n"
        )
    return cfg


class TestEnhanceCommand:
    def test_one_step_zero_head_reproduces_decode(
        self, tmp_path, image_file, zero_head_checkpoint
    ):
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs)])
        dec = tmp_path / "dec.ppm"
        enh = tmp_path / "enh.ppm"
        main(["decode", "--input", str(bs), "--out", str(dec)])
        rc = main(
            [
                "enhance",
                "--input",
                str(bs),
                "--checkpoint",
                str(zero_head_checkpoint),
                "--out",
                str(enh),
                "--steps",
                "1",
            ]
        )
        assert rc == 0
        assert enh.read_bytes() == dec.read_bytes()

    def test_deterministic_outputs(self, tmp_path, image_file, zero_head_checkpoint):
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs)])
        outs = []
        for name in ("e1.ppm", "e2.ppm"):
            out = tmp_path / name
            assert (
                main(
                    [
                        "enhance",
                        "--input",
                        str(bs),
                        "--checkpoint",
                        str(zero_head_checkpoint),
                        "--out",
                        str(out),
                        "--steps",
                        "5",
                        "--seed",
                        "3",
                    ]
                )
                == 0
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_psnr_printed_with_original(
        self, tmp_path, image_file, zero_head_checkpoint, capsys
    ):
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs)])
        rc = main(
            [
                "enhance",
                "--input",
                str(bs),
                "--checkpoint",
                str(zero_head_checkpoint),
                "--out",
                str(tmp_path / "e.ppm"),
                "--steps",
                "1",
                "--original",
                str(image_file),
            ]
        )
        assert rc == 0
        assert "psnr" in capsys.readouterr().out

    def test_trajectory_dump(self, tmp_path, image_file, zero_head_checkpoint):
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs)])
        prefix = str(tmp_path / "traj")
        rc = main(
            [
                "enhance",
                "--input",
                str(bs),
                "--checkpoint",
                str(zero_head_checkpoint),
                "--out",
                str(tmp_path / "e.ppm"),
                "--steps",
                "6",
                "--dump-trajectory",
                prefix,
            ]
        )
        assert rc == 0
        dump = np.load(prefix + ".npz")
        assert dump["latents"].shape[0] == 6
        lines = (tmp_path / "traj.csv").read_text().splitlines()
        assert lines[0] == "step,t,mean_abs_pred,psnr_so_far"
        assert len(lines) == 7

    def test_thresholds_without_rate_in_header(
        self, tmp_path, zero_head_checkpoint, capsys
    ):
        # craft a header whose scale code is 0 (no rate information)
        stream = pack_header(16, 16, 0, b"\x00\x01")
        bs = tmp_path / "norate.rdc"
        bs.write_bytes(stream)
        table = tmp_path / "t.txt"
        table.write_text("# coverage 0.95\n0.001 0.5\n")
        rc = main(
            [
                "enhance",
                "--input",
                str(bs),
                "--checkpoint",
                str(zero_head_checkpoint),
                "--out",
                str(tmp_path / "e.ppm"),
                "--steps",
                "1",
                "--thresholds",
                str(table),
            ]
        )
        assert rc == 2
        assert "no rate parameter" in capsys.readouterr().err

    def test_plan_exceeding_schedule_rejected(
        self, tmp_path, image_file, zero_head_checkpoint
    ):
        bs = tmp_path / "x.rdc"
        main(["encode", "--input", str(image_file), "--out", str(bs)])
        rc = main(
            [
                "enhance",
                "--input",
                str(bs),
                "--checkpoint",
                str(zero_head_checkpoint),
                "--out",
                str(tmp_path / "e.ppm"),
                "--plan-steps",
                "2000",
            ]
        )
        assert rc == 2


class TestFitThresholdsCommand:
    def test_writes_monotone_table(self, tmp_path, small_corpus):
        out = tmp_path / "thresholds.txt"
        rc = main(
            [
                "fit-thresholds",
                "--corpus",
                str(small_corpus),
                "--out",
                str(out),
                "--grid",
                "4",
                "--min-samples",
                "1000",
            ]
        )
        assert rc == 0
        from resdiff.residuals import ThresholdTable

        table = ThresholdTable.load(out)
        assert np.all(np.diff(table.taus) <= 0)
        # round trip is byte identical
        again = tmp_path / "thresholds2.txt"
        table.save(again)
        assert out.read_bytes() == again.read_bytes()

    def test_insufficient_samples_fails(self, tmp_path, small_corpus):
        rc = main(
            [
                "fit-thresholds",
                "--corpus",
                str(small_corpus),
                "--out",
                str(tmp_path / "t.txt"),
                "--grid",
                "3",
                "--min-samples",
                "10000000",
            ]
        )
        assert rc == 3


class TestAnalyzeCommand:
    def test_curvature_row_count(self, tmp_path, image_file, zero_head_checkpoint):
        out = tmp_path / "curv.csv"
        rc = main(
            [
                "analyze",
                "--type",
                "curvature",
                "--checkpoint",
                str(zero_head_checkpoint),
                "--input",
                str(image_file),
                "--steps",
                "8",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "step,t_from,t_to,angle_rad,zero_norm"
        assert len(lines) == 8  # header + (n - 1) rows

    def test_residual_histogram_report(self, tmp_path, small_corpus):
        out = tmp_path / "res.csv"
        rc = main(
            [
                "analyze",
                "--type",
                "residuals",
                "--corpus",
                str(small_corpus),
                "--rate",
                "0.2",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# lambda")
        assert lines[1].startswith("# excess_kurtosis")
        assert lines[2] == "bin_left,bin_right,count_r,count_g,count_b"

    def test_traversal_requires_inputs(self, tmp_path, small_corpus, capsys):
        rc = main(
            [
                "analyze",
                "--type",
                "traversal",
                "--corpus",
                str(small_corpus),
                "--out",
                str(tmp_path / "t.csv"),
            ]
        )
        assert rc == 2
