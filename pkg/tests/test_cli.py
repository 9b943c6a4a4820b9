import numpy as np
import pytest
from PIL import Image

from framefill.cli import parse_config_text, run
from framefill.errors import ConfigError
from framefill.media import load_frames, save_clip, save_masks
from framefill.datasynth import composite_holes

from conftest import texture


@pytest.fixture
def synth_inputs(tmp_path, rng):
    """Source image and object mask directories for the synth command."""
    images = tmp_path / "images"
    omasks = tmp_path / "objects"
    images.mkdir()
    omasks.mkdir()
    src = texture(rng, 128)
    Image.fromarray((src.data * 255).astype(np.uint8), "RGB").save(images / "src.png")
    yy, xx = np.mgrid[:48, :48]
    disk = ((yy - 24) ** 2 + (xx - 24) ** 2 < 14 ** 2).astype(np.uint8) * 255
    Image.fromarray(disk, "L").save(omasks / "disk.png")
    return images, omasks


SYNTH_CFG = "\n".join([
    "synth.n_frames = 4",
    "synth.out_size = 64",
    "synth.translation_px = 2.0",
    "synth.rotation_deg = 0.5",
    "synth.shear_deg = 0.5",
    "synth.scale_pct = 0.5",
]) + "\n"

FAST_INPAINT_CFG = "\n".join([
    "align.pyramid_levels = 3",
    "align.max_iters_per_level = 40",
]) + "\n"


class TestConfigParsing:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("nonsense = 1\n", {"known"})

    def test_comments_and_blanks_ok(self):
        out = parse_config_text("# comment\n\nknown = 3  # trailing\n", {"known"})
        assert out == {"known": "3"}

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just a line\n", {"known"})


class TestUsageErrors:
    def test_missing_flags_exit_one(self, capsys):
        assert run(["inpaint"]) == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_unknown_subcommand_exit_one(self):
        assert run(["frobnicate"]) == 1

    def test_no_arguments_exit_one(self):
        assert run([]) == 1

    def test_unknown_config_key_exit_one(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("bogus_key = 1\n")
        code = run(["inpaint", "--frames", str(tmp_path), "--masks",
                    str(tmp_path), "--out", str(tmp_path / "o"),
                    "--config", str(cfg)])
        assert code == 1
        assert "unknown key" in capsys.readouterr().err

    def test_missing_dir_exit_two(self, tmp_path):
        code = run(["inpaint", "--frames", str(tmp_path / "nope"),
                    "--masks", str(tmp_path / "nope"),
                    "--out", str(tmp_path / "o")])
        assert code == 2


class TestEvalCommand:
    def test_identical_dirs_capped_psnr(self, tmp_path, rng):
        from framefill.media import VideoClip, HoleMask, Frame
        frames = tuple(texture(rng, 24) for _ in range(3))
        masks = tuple(HoleMask(np.zeros((24, 24))) for _ in range(3))
        save_clip(VideoClip(frames, masks), tmp_path / "d")
        out = tmp_path / "m.csv"
        code = run(["eval", "--pred", str(tmp_path / "d"),
                    "--truth", str(tmp_path / "d"), "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "frame,psnr_full,psnr_hole,ssim"
        for line in lines[1:4]:
            _, full, hole, s = line.split(",")
            assert float(full) == 99.0
            assert hole == ""
            assert abs(float(s) - 1.0) < 1e-6
        assert lines[4].startswith("mean,99.0000")

    def test_count_mismatch_exit_two(self, tmp_path, rng):
        from framefill.media import VideoClip, HoleMask
        f1 = tuple(texture(rng, 24) for _ in range(2))
        f2 = tuple(texture(rng, 24) for _ in range(3))
        zeros = lambda n: tuple(HoleMask(np.zeros((24, 24))) for _ in range(n))
        save_clip(VideoClip(f1, zeros(2)), tmp_path / "a")
        save_clip(VideoClip(f2, zeros(3)), tmp_path / "b")
        code = run(["eval", "--pred", str(tmp_path / "a"),
                    "--truth", str(tmp_path / "b"),
                    "--out", str(tmp_path / "m.csv")])
        assert code == 2


class TestFullRoundTrip:
    def test_synth_inpaint_eval(self, tmp_path, synth_inputs):
        images, omasks = synth_inputs
        synth_cfg = tmp_path / "synth.cfg"
        synth_cfg.write_text(SYNTH_CFG)
        inpaint_cfg = tmp_path / "inpaint.cfg"
        inpaint_cfg.write_text(FAST_INPAINT_CFG)
        data = tmp_path / "data"
        out = tmp_path / "out"

        assert run(["synth", "--images", str(images), "--object-masks",
                    str(omasks), "--out", str(data), "--seed", "11",
                    "--config", str(synth_cfg)]) == 0
        assert (data / "manifest.txt").exists()
        assert len(list((data / "input_frames").iterdir())) == 4

        assert run(["inpaint", "--frames", str(data / "input_frames"),
                    "--masks", str(data / "input_masks"),
                    "--out", str(out), "--config", str(inpaint_cfg),
                    "--report", str(tmp_path / "report.csv"),
                    "--threads", "2"]) == 0
        assert len(list(out.iterdir())) == 4
        assert (tmp_path / "report.csv").read_text().startswith("frame,")

        csv_path = tmp_path / "metrics.csv"
        assert run(["eval", "--pred", str(out),
                    "--truth", str(data / "truth_frames"),
                    "--masks", str(data / "input_masks"),
                    "--out", str(csv_path)]) == 0
        lines = csv_path.read_text().strip().split("\n")
        mean = lines[-1].split(",")
        assert mean[0] == "mean"
        assert float(mean[1]) > 25.0  # full-frame PSNR on completed clip


class TestDebugDir:
    def test_writes_never_visible_masks(self, tmp_path, rng):
        from framefill.media import VideoClip, HoleMask, Frame
        frames = []
        masks = []
        base = texture(rng, 32)
        for t in range(3):
            m = np.zeros((32, 32), dtype=np.uint8)
            m[8:14, 8 + 8 * t:14 + 8 * t] = 1
            frames.append(Frame(base.data * (1 - m[..., None])))
            masks.append(HoleMask(m))
        clip = VideoClip(tuple(frames), tuple(masks))
        save_clip(clip, tmp_path / "f")
        save_masks(clip.masks, tmp_path / "m")
        cfg = tmp_path / "c.cfg"
        cfg.write_text(FAST_INPAINT_CFG)
        code = run(["inpaint", "--frames", str(tmp_path / "f"),
                    "--masks", str(tmp_path / "m"),
                    "--out", str(tmp_path / "o"), "--config", str(cfg),
                    "--no-bidirectional",
                    "--debug-dir", str(tmp_path / "dbg")])
        assert code == 0
        files = sorted(p.name for p in (tmp_path / "dbg").iterdir())
        assert files == ["cmask_00000.png", "cmask_00001.png", "cmask_00002.png"]


class TestAlignDebug:
    def test_trace_csv(self, tmp_path, rng, capsys):
        img = texture(rng, 64)
        shifted = np.roll(img.data, 3, axis=1)
        Image.fromarray((img.data * 255).astype(np.uint8), "RGB").save(tmp_path / "t.png")
        Image.fromarray((shifted * 255).astype(np.uint8), "RGB").save(tmp_path / "r.png")
        out = tmp_path / "trace.csv"
        code = run(["align-debug", "--target", str(tmp_path / "t.png"),
                    "--ref", str(tmp_path / "r.png"), "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "level,iter,objective"
        assert len(lines) > 1
        assert "affine:" in capsys.readouterr().out


class TestProfile:
    def test_writes_png(self, tmp_path, rng):
        from framefill.media import VideoClip, HoleMask
        frames = tuple(texture(rng, 24) for _ in range(5))
        masks = tuple(HoleMask(np.zeros((24, 24))) for _ in range(5))
        save_clip(VideoClip(frames, masks), tmp_path / "f")
        out = tmp_path / "profile.png"
        code = run(["profile", "--frames", str(tmp_path / "f"),
                    "--row", "10", "--out", str(out)])
        assert code == 0
        with Image.open(out) as img:
            assert img.size == (24, 5)

    def test_row_out_of_range_exit_one(self, tmp_path, rng):
        from framefill.media import VideoClip, HoleMask
        frames = tuple(texture(rng, 24) for _ in range(2))
        masks = tuple(HoleMask(np.zeros((24, 24))) for _ in range(2))
        save_clip(VideoClip(frames, masks), tmp_path / "f")
        code = run(["profile", "--frames", str(tmp_path / "f"),
                    "--row", "99", "--out", str(tmp_path / "p.png")])
        assert code == 1
