import csv
import hashlib

import h5py
import numpy as np

from kgrecon import read_complex, read_mask, write_complex
from kgrecon.cli import main
from kgrecon.data_io import shepp_logan


def file_hash(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(argv):
    return main([str(a) for a in argv])


class TestMaskCommand:
    def test_writes_mask_and_reports_fraction(self, tmp_path, capsys):
        rc = run(
            ["mask", "--height", 32, "--width", 64, "--acceleration", 4,
             "--center-fraction", 0.08, "--seed", 5, "--out-dir", tmp_path]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "sampled fraction" in out
        m = read_mask(tmp_path / "mask.mask")
        assert m.shape == (32, 64)
        assert (tmp_path / "mask.png").exists()

    def test_full_sampling_fraction_is_one(self, tmp_path, capsys):
        rc = run(
            ["mask", "--height", 8, "--width", 16, "--acceleration", 1,
             "--center-fraction", 1.0, "--out-dir", tmp_path]
        )
        assert rc == 0
        assert "1.0000" in capsys.readouterr().out

    def test_same_seed_same_file_hash(self, tmp_path):
        for sub in ("a", "b"):
            run(
                ["mask", "--height", 16, "--width", 32, "--acceleration", 4,
                 "--seed", 7, "--out-dir", tmp_path / sub]
            )
        assert file_hash(tmp_path / "a/mask.mask") == file_hash(tmp_path / "b/mask.mask")

    def test_infeasible_mask_is_usage_error(self, tmp_path, capsys):
        rc = run(
            ["mask", "--height", 8, "--width", 16, "--acceleration", 8,
             "--center-fraction", 0.5, "--out-dir", tmp_path]
        )
        assert rc == 1
        assert "center_fraction" in capsys.readouterr().err


class TestSimulateCommand:
    def test_phantom_simulation_outputs(self, tmp_path, capsys):
        rc = run(
            ["simulate", "--height", 32, "--width", 32, "--acceleration", 4,
             "--seed", 3, "--out-dir", tmp_path]
        )
        assert rc == 0
        for name in ("x_obs.cplx", "ground_truth.cplx", "mask.mask",
                     "ground_truth.png", "zero_fill.png"):
            assert (tmp_path / name).exists(), name
        assert "zero-fill PSNR" in capsys.readouterr().out
        x_obs = read_complex(tmp_path / "x_obs.cplx")
        m = read_mask(tmp_path / "mask.mask")
        unsampled = ~m.as_bool()
        assert np.abs(x_obs[unsampled]).max() == 0.0

    def test_full_mask_reports_inf(self, tmp_path, capsys):
        rc = run(
            ["simulate", "--height", 16, "--width", 16, "--acceleration", 1,
             "--center-fraction", 1.0, "--out-dir", tmp_path]
        )
        assert rc == 0
        assert "inf" in capsys.readouterr().out

    def test_deterministic_outputs(self, tmp_path):
        for sub in ("a", "b"):
            run(
                ["simulate", "--height", 16, "--width", 16, "--acceleration", 4,
                 "--seed", 11, "--out-dir", tmp_path / sub]
            )
        assert file_hash(tmp_path / "a/x_obs.cplx") == file_hash(tmp_path / "b/x_obs.cplx")

    def test_fastmri_input(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = (rng.standard_normal((3, 16, 16)) + 1j * rng.standard_normal((3, 16, 16))).astype(
            np.complex64
        )
        h5path = tmp_path / "vol.h5"
        with h5py.File(h5path, "w") as f:
            f.create_dataset("kspace", data=raw)
        rc = run(
            ["simulate", "--input", h5path, "--slice", 1, "--acceleration", 4,
             "--out-dir", tmp_path / "out"]
        )
        assert rc == 0
        assert read_complex(tmp_path / "out/x_obs.cplx").shape == (16, 16)

    def test_reuses_existing_mask(self, tmp_path):
        run(["mask", "--height", 16, "--width", 16, "--acceleration", 2,
             "--center-fraction", 0.2, "--seed", 9, "--out-dir", tmp_path])
        rc = run(
            ["simulate", "--height", 16, "--width", 16,
             "--mask", tmp_path / "mask.mask", "--out-dir", tmp_path / "sim"]
        )
        assert rc == 0
        a = read_mask(tmp_path / "mask.mask")
        b = read_mask(tmp_path / "sim/mask.mask")
        np.testing.assert_array_equal(a.column_flags, b.column_flags)

    def test_slice_out_of_range(self, tmp_path, capsys):
        h5path = tmp_path / "vol.h5"
        with h5py.File(h5path, "w") as f:
            f.create_dataset(
                "kspace", data=np.zeros((2, 8, 8), dtype=np.complex64)
            )
        rc = run(["simulate", "--input", h5path, "--slice", 5, "--out-dir", tmp_path])
        assert rc == 1


def simulate_small(tmp_path, seed=3):
    run(
        ["simulate", "--height", 16, "--width", 16, "--acceleration", 2,
         "--center-fraction", 0.2, "--seed", seed, "--out-dir", tmp_path]
    )
    return tmp_path / "x_obs.cplx", tmp_path / "mask.mask"


RECON_FLAGS = ["--steps", 60, "--stride", 6, "--num-samples", 2,
               "--refine-steps", 5, "--tc-repeats", 1, "--prior-std", 0.3]


class TestReconstructCommand:
    def test_outputs_and_log(self, tmp_path, capsys):
        obs, mask = simulate_small(tmp_path)
        rc = run(
            ["reconstruct", "--observation", obs, "--mask", mask, "--seed", 1,
             "--out-dir", tmp_path / "recon", *RECON_FLAGS]
        )
        assert rc == 0
        out_dir = tmp_path / "recon"
        for name in ("recon.cplx", "recon.png", "report.png", "reconstruct.log"):
            assert (out_dir / name).exists(), name
        log = (out_dir / "reconstruct.log").read_text()
        assert "consistency residual" in log
        assert "coarse phase" in log and "refinement" in log
        assert "consistency residual" in capsys.readouterr().out

    def test_seed_reproducibility_across_threads(self, tmp_path):
        obs, mask = simulate_small(tmp_path)
        hashes = []
        for sub, threads in (("r1", 1), ("r2", 4), ("r3", 1)):
            rc = run(
                ["reconstruct", "--observation", obs, "--mask", mask, "--seed", 12,
                 "--threads", threads, "--out-dir", tmp_path / sub, *RECON_FLAGS]
            )
            assert rc == 0
            hashes.append(file_hash(tmp_path / sub / "recon.cplx"))
        assert hashes[0] == hashes[1] == hashes[2]

    def test_single_chain_no_refinement(self, tmp_path):
        obs, mask = simulate_small(tmp_path)
        rc = run(
            ["reconstruct", "--observation", obs, "--mask", mask,
             "--steps", 40, "--stride", 8, "--num-samples", 1, "--refine-steps", 0,
             "--tc-repeats", 1, "--out-dir", tmp_path / "r"]
        )
        assert rc == 0

    def test_prior_mean_from_file(self, tmp_path):
        obs, mask = simulate_small(tmp_path)
        mean_path = tmp_path / "mean.cplx"
        write_complex(mean_path, shepp_logan(16, 16).astype(complex))
        rc = run(
            ["reconstruct", "--observation", obs, "--mask", mask,
             "--prior-mean", mean_path, "--out-dir", tmp_path / "r", *RECON_FLAGS]
        )
        assert rc == 0

    def test_corrupt_observation_is_data_error(self, tmp_path, capsys):
        obs, mask = simulate_small(tmp_path)
        bad = tmp_path / "bad.cplx"
        bad.write_bytes(b"garbage")
        rc = run(["reconstruct", "--observation", bad, "--mask", mask])
        assert rc == 2

    def test_missing_observation_is_data_error(self, tmp_path):
        obs, mask = simulate_small(tmp_path)
        rc = run(["reconstruct", "--observation", tmp_path / "nope.cplx", "--mask", mask])
        assert rc == 2

    def test_non_finite_observation_is_numerical_failure(self, tmp_path, capsys):
        obs, mask = simulate_small(tmp_path)
        poisoned = read_complex(obs)
        poisoned[0, 0] = np.inf
        write_complex(obs, poisoned)
        rc = run(
            ["reconstruct", "--observation", obs, "--mask", mask,
             "--out-dir", tmp_path / "r", *RECON_FLAGS]
        )
        assert rc == 3
        assert "non-finite" in capsys.readouterr().err

    def test_network_denoiser_path(self, tmp_path):
        from kgrecon.unet import init_random, save_weights

        obs, mask = simulate_small(tmp_path)
        weights = tmp_path / "model.mfuw"
        save_weights(init_random(0), weights)
        rc = run(
            ["reconstruct", "--observation", obs, "--mask", mask,
             "--denoiser", "weights", "--weights", weights,
             "--backbone-scale", 1.3, "--skip-scale", 0.8,
             "--steps", 40, "--stride", 10, "--num-samples", 1,
             "--refine-steps", 0, "--tc-repeats", 1,
             "--out-dir", tmp_path / "r"]
        )
        assert rc == 0
        assert (tmp_path / "r/recon.cplx").exists()

    def test_weights_flag_required_for_network_denoiser(self, tmp_path):
        obs, mask = simulate_small(tmp_path)
        rc = run(["reconstruct", "--observation", obs, "--mask", mask,
                  "--denoiser", "weights"])
        assert rc == 1


class TestEvaluateCommand:
    def test_self_evaluation_is_perfect(self, tmp_path, capsys):
        img = shepp_logan(16, 16).astype(complex)
        a = tmp_path / "a.cplx"
        write_complex(a, img)
        rc = run(["evaluate", a, a, "--out-dir", tmp_path])
        assert rc == 0
        rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
        assert rows[0]["ssim"] == "1.000000"
        assert rows[0]["psnr_db"] == "inf"
        assert (tmp_path / "metrics.png").exists()

    def test_csv_column_order(self, tmp_path):
        img = shepp_logan(16, 16).astype(complex)
        a = tmp_path / "a.cplx"
        write_complex(a, img)
        run(["evaluate", a, a, "--af", 4, "--out-dir", tmp_path])
        header = open(tmp_path / "metrics.csv").readline().strip()
        assert header == "file,slice,af,psnr_db,ssim"

    def test_multiple_pairs_and_af(self, tmp_path):
        rng = np.random.default_rng(1)
        ref = shepp_logan(16, 16)
        rows = []
        for i in range(2):
            r = tmp_path / f"ref{i}.cplx"
            x = tmp_path / f"rec{i}.cplx"
            write_complex(r, ref.astype(complex))
            write_complex(x, (ref + 0.05 * rng.standard_normal(ref.shape)).astype(complex))
            rows += [r, x]
        rc = run(["evaluate", *rows, "--af", 6, "--out-dir", tmp_path, "--no-figure"])
        assert rc == 0
        parsed = list(csv.DictReader(open(tmp_path / "metrics.csv")))
        assert [r["slice"] for r in parsed] == ["0", "1"]
        assert all(r["af"] == "6" for r in parsed)
        assert not (tmp_path / "metrics.png").exists()

    def test_odd_file_count_is_usage_error(self, tmp_path, capsys):
        img = tmp_path / "a.cplx"
        write_complex(img, np.zeros((8, 8), dtype=complex))
        assert run(["evaluate", img, "--out-dir", tmp_path]) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        img = tmp_path / "a.cplx"
        write_complex(img, shepp_logan(8, 8).astype(complex))
        assert run(["evaluate", img, tmp_path / "missing.cplx", "--out-dir", tmp_path]) == 2


class TestConfigFile:
    def test_config_supplies_values(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("height=16\nwidth=32 # comment\nacceleration=2\n# full line comment\n")
        rc = run(["mask", "--config", cfg, "--out-dir", tmp_path])
        assert rc == 0
        assert read_mask(tmp_path / "mask.mask").shape == (16, 32)

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("height=16\nwidth=16\n")
        run(["mask", "--config", cfg, "--width", 64, "--out-dir", tmp_path])
        assert read_mask(tmp_path / "mask.mask").shape == (16, 64)

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nonsense=1\n")
        assert run(["mask", "--config", cfg, "--out-dir", tmp_path]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_malformed_line_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just a line\n")
        assert run(["mask", "--config", cfg, "--out-dir", tmp_path]) == 1


class TestUsage:
    def test_no_command_prints_help(self, capsys):
        assert run([]) == 1
        assert "command" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert run(["frobnicate"]) == 1

    def test_unknown_flag(self, capsys):
        assert run(["mask", "--bogus", "1"]) == 1
