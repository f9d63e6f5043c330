import json

import pytest

from icefuse import IceConfig, SynthSpec, evaluate, read_bundle, synth_bundle, write_bundle
from icefuse.cli import main

from conftest import make_bundle


@pytest.fixture
def bundle_path(tmp_path):
    b = synth_bundle(
        SynthSpec(
            n_images=120,
            n_classes=6,
            dim=12,
            image_noise=1.4,
            caption_noise=0.4,
            caption_noise_shared=1.0,
            tau_hint=8.0,
            seed=31,
        )
    )
    path = tmp_path / "b.iceb"
    write_bundle(b, path)
    return str(path)


class TestSynthCommand:
    def test_reproducible_output_file(self, tmp_path, capsys):
        a, b = str(tmp_path / "a.iceb"), str(tmp_path / "b.iceb")
        args = ["--n", "40", "--classes", "4", "--dim", "8", "--seed", "5"]
        assert main(["synth", "--out", a] + args) == 0
        assert main(["synth", "--out", b] + args) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_perfect_captions_reported(self, tmp_path, capsys):
        out = str(tmp_path / "p.iceb")
        rc = main(
            [
                "synth", "--out", out, "--n", "50", "--classes", "4", "--dim", "8",
                "--caption-signal", "1.0", "--image-noise", "0", "--caption-noise", "0",
            ]
        )
        assert rc == 0
        assert "caption_only=100.00%" in capsys.readouterr().out

    def test_single_class_exit_2(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "x.iceb"), "--classes", "1"])
        assert rc == 2
        assert "n_classes" in capsys.readouterr().err


class TestValidateCommand:
    def test_ok_summary(self, bundle_path, capsys):
        assert main(["validate-bundle", bundle_path]) == 0
        out = capsys.readouterr().out
        assert out.startswith("OK:")
        assert "images=120" in out
        assert "classes=6" in out

    def test_corrupted_byte_exit_3(self, bundle_path, capsys):
        data = bytearray(open(bundle_path, "rb").read())
        data[len(data) // 2] ^= 0x01
        open(bundle_path, "wb").write(bytes(data))
        assert main(["validate-bundle", bundle_path]) == 3
        assert "checksum" in capsys.readouterr().out.lower()

    def test_missing_file_exit_3(self, tmp_path):
        assert main(["validate-bundle", str(tmp_path / "nope.iceb")]) == 3


class TestPredictCommand:
    def test_record_lines(self, bundle_path, capsys):
        assert main(["predict", "--bundle", bundle_path, "--ids", "0,3"]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 2
        assert lines[0].startswith("id=0 image=")
        assert "lambda=" in lines[0]
        assert "label=" in lines[0]

    def test_image_only_mode_matches_image_column(self, bundle_path, capsys):
        assert (
            main(
                [
                    "predict", "--bundle", bundle_path,
                    "--ids", "0,1,2,3,4", "--lambda-mode", "image_only",
                ]
            )
            == 0
        )
        for line in capsys.readouterr().out.strip().split("\n"):
            fields = dict(kv.split("=") for kv in line.replace("[", "").replace("]", "").split() if "=" in kv)
            assert fields["ice"] == fields["image"]

    def test_id_out_of_range_exit_4(self, bundle_path, capsys):
        assert main(["predict", "--bundle", bundle_path, "--ids", "4000"]) == 4

    def test_invalid_k_exit_2_names_field(self, bundle_path, capsys):
        assert main(["predict", "--bundle", bundle_path, "--ids", "0", "--k", "0"]) == 2
        assert "K" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_writes_reports(self, bundle_path, tmp_path, capsys):
        csv_path = tmp_path / "rep.csv"
        json_path = tmp_path / "rep.json"
        rc = main(
            [
                "evaluate", "--bundle", bundle_path, "--workers", "1",
                "--report-csv", str(csv_path), "--report-json", str(json_path),
            ]
        )
        assert rc == 0
        lines = csv_path.read_text().strip().split("\n")
        assert lines[0].startswith("bundle,method,reduction,top1")
        assert len(lines) == 4  # header + 3 methods
        doc = json.loads(json_path.read_text())
        assert doc["run_config"]["k"] == 5
        assert doc["bundles"][0]["config"]["K"] == 5
        assert doc["bundles"][0]["quadrants"]["fixed"] >= 0
        assert "created_at" in doc
        records = doc["bundles"][0]["records"]["single"]
        assert len(records) == 120
        assert {"index", "label", "image_pred", "ice_pred", "lambda_used"} <= set(
            records[0]
        )

    def test_missing_bundle_no_partial_report(self, tmp_path, capsys):
        csv_path = tmp_path / "never.csv"
        rc = main(
            [
                "evaluate", "--bundle", str(tmp_path / "ghost.iceb"),
                "--report-csv", str(csv_path), "--workers", "1",
            ]
        )
        assert rc == 3
        assert not csv_path.exists()

    def test_rerun_identical_csv_bytes(self, bundle_path, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["evaluate", "--bundle", bundle_path, "--workers", "1"]
        assert main(argv + ["--report-csv", str(a)]) == 0
        assert main(argv + ["--report-csv", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_two_bundles_two_rows_per_method(self, bundle_path, tmp_path, capsys):
        other = synth_bundle(SynthSpec(n_images=80, n_classes=5, dim=10, seed=77))
        other_path = tmp_path / "other.iceb"
        write_bundle(other, other_path)
        csv_path = tmp_path / "multi.csv"
        rc = main(
            [
                "evaluate", "--bundle", bundle_path, "--bundle", str(other_path),
                "--methods", "image_only,ice", "--workers", "1",
                "--report-csv", str(csv_path),
            ]
        )
        assert rc == 0
        lines = csv_path.read_text().strip().split("\n")
        assert len(lines) == 1 + 2 * 2

    def test_group_averages_printed(self, bundle_path, tmp_path, capsys):
        other = synth_bundle(SynthSpec(n_images=80, n_classes=5, dim=10, seed=78))
        other_path = tmp_path / "o.iceb"
        write_bundle(other, other_path)
        rc = main(
            [
                "evaluate",
                "--bundle", f"{bundle_path}@cross",
                "--bundle", f"{other_path}@domain",
                "--workers", "1",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "average[cross_dataset]" in out
        assert "average[domain_generalization]" in out


class TestAblateCommand:
    def test_k_axis_with_max(self, bundle_path, tmp_path, capsys):
        out_csv = tmp_path / "grid.csv"
        rc = main(
            [
                "ablate", "--bundle", bundle_path, "--axis", "K",
                "--values", "1,4,5,max", "--out", str(out_csv), "--workers", "1",
            ]
        )
        assert rc == 0
        lines = out_csv.read_text().strip().split("\n")
        assert lines[0] == "axis,value,top1,top1_fixed"
        assert len(lines) == 5

    def test_xi_axis_paired_columns(self, bundle_path, capsys):
        rc = main(
            [
                "ablate", "--bundle", bundle_path, "--axis", "xi",
                "--values", "0,0.08", "--workers", "1",
            ]
        )
        assert rc == 0
        lines = capsys.readouterr().out.strip().split("\n")
        for line in lines[1:]:
            parts = line.split(",")
            assert len(parts) == 4
            assert parts[3] != ""  # fixed series present

    def test_upsilon_beyond_stored_exit_2(self, bundle_path, capsys):
        rc = main(
            [
                "ablate", "--bundle", bundle_path, "--axis", "upsilon",
                "--values", "9", "--workers", "1",
            ]
        )
        assert rc == 2

    def test_unknown_axis_exit_2(self, bundle_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["ablate", "--bundle", bundle_path, "--axis", "zeta", "--values", "1"])
        assert exc.value.code == 2

    def test_rerun_identical_grid(self, bundle_path, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = [
            "ablate", "--bundle", bundle_path, "--axis", "xi",
            "--values", "0,0.04,0.08", "--workers", "1",
        ]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestConfigFile:
    def test_file_values_applied_and_flags_override(self, bundle_path, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment\n"
            f"bundle = {bundle_path}\n"
            "K = 3\n"
            "xi = 0.16\n"
            "lambda_mode = fixed:0.1\n"
            "tau = 4.0\n"
            "methods = image_only, ice\n"
        )
        json_path = tmp_path / "r.json"
        rc = main(
            [
                "evaluate", "--config", str(cfg), "--k", "2",
                "--report-json", str(json_path), "--workers", "1",
            ]
        )
        assert rc == 0
        doc = json.loads(json_path.read_text())
        echoed = doc["bundles"][0]["config"]
        assert echoed["K"] == 2  # flag wins over file
        assert echoed["xi"] == 0.16
        assert echoed["lambda_mode"] == "fixed"
        assert echoed["lambda_fixed"] == 0.1
        assert echoed["tau"] == 4.0
        assert echoed["methods"] == ["image_only", "ice"]

    def test_unknown_key_exit_2(self, bundle_path, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("flux_capacitance = 11\n")
        rc = main(["evaluate", "--config", str(cfg), "--bundle", bundle_path])
        assert rc == 2
        assert "flux_capacitance" in capsys.readouterr().err

    def test_bad_lambda_mode_exit_2(self, bundle_path, tmp_path, capsys):
        rc = main(
            ["predict", "--bundle", bundle_path, "--ids", "0", "--lambda-mode", "psychic"]
        )
        assert rc == 2


class TestTauDefaulting:
    def test_bundle_hint_used_when_tau_unset(self, bundle_path, tmp_path, capsys):
        json_path = tmp_path / "tau.json"
        rc = main(
            [
                "evaluate", "--bundle", bundle_path, "--workers", "1",
                "--report-json", str(json_path),
            ]
        )
        assert rc == 0
        doc = json.loads(json_path.read_text())
        bundle = read_bundle(bundle_path)
        assert doc["bundles"][0]["config"]["tau"] == bundle.tau_hint
