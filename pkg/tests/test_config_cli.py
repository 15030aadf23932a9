import csv
import dataclasses
import json

import pytest

from ddisac.cli import build_parser, main
from ddisac.config import KINDS, ExperimentSpec, emit_config, load_config, parse_config
from ddisac.errors import ConfigError

SMALL = """\
M: 4
N: 4
l_max: 3
k_max: 1.5
channel_realizations: 2
mc_blocks: 40
power_dbm: [26, 30]
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestParse:
    def test_empty_file_gives_defaults(self):
        spec = parse_config("")
        assert (spec.M, spec.N, spec.delta_f, spec.carrier_freq) == (8, 8, 2e3, 4e9)
        assert (spec.paths, spec.l_max, spec.k_max, spec.constellation) == (3, 4, 2.0, 4)
        assert (spec.sigma_c_dbm, spec.sigma_s_dbm, spec.xi_0) == (0.0, 0.0, 1e-3)
        assert spec.channel_realizations == 20
        assert spec == ExperimentSpec()

    @pytest.mark.parametrize("kind", KINDS)
    def test_kind_defaults_validate(self, kind):
        spec = parse_config("", kind=kind)
        assert spec.kind == kind and len(spec.power_dbm) >= 1

    def test_zero_dimension_names_field(self):
        with pytest.raises(ConfigError, match=r"^M \(line 2\)"):
            parse_config("N: 8\nM: 0\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config("M: 4\nbogus: 1\n")

    @pytest.mark.parametrize("text, field", [
        ("power_dbm: []", "power_dbm"),
        ("gamma_c: [-1e-5]", "gamma_c"),
        ("constellation: 6", "constellation"),
        ("seed: -1", "seed"),
        ("kind: nonsense", "kind"),
        ("M: 2.5", "M"),
        ("l_max: 16\nM: 4\nN: 4", "l_max"),
        ("power_dbm: [.inf]", "power_dbm"),
        ("baseline_power: scaled", "baseline_power"),
    ])
    def test_rejections(self, text, field):
        with pytest.raises(ConfigError, match=f"^{field}"):
            parse_config(text)

    def test_malformed_yaml(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("M: [1, 2\nN: 3")
        with pytest.raises(ConfigError):
            parse_config("- a\n- b\n")

    def test_scalar_sweep_promoted(self):
        assert parse_config("power_dbm: 25").power_dbm == (25.0,)

    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind):
        spec = dataclasses.replace(parse_config(SMALL, kind=kind), seed=2 ** 63 + 5, max_iters=150)
        assert parse_config(emit_config(spec)) == spec

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")
        assert load_config(None, kind="convergence").kind == "convergence"


class TestCli:
    def test_flags(self):
        args = build_parser().parse_args(["--config", "c.yaml", "--experiment", "diag-elements", "--seed",
                                          "18446744073709551615", "--output", "o", "--realizations", "3",
                                          "--quiet"])
        assert args.seed == 2 ** 64 - 1 and args.realizations == 3 and args.quiet

    @pytest.mark.parametrize("argv", [["--seed", "-1"], ["--seed", str(2 ** 64)], ["--realizations", "0"],
                                      ["--experiment", "fig9"]])
    def test_bad_flags(self, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2

    def test_config_error_exit(self, tmp_path):
        assert main(["--config", str(write(tmp_path, "M: 0\n")), "--output", str(tmp_path / "o"),
                     "--quiet"]) == 2
        assert not (tmp_path / "o").exists()

    def test_numerical_failure_exit(self, tmp_path):
        # an active CRB target so the ellipsoid loop has to run
        text = SMALL.replace("power_dbm: [26, 30]", "power_dbm: [30]") + "gamma_c: [2.0e-4]\nmax_iters: 2\n"
        cfg = write(tmp_path, text)
        out = tmp_path / "out"
        code = main(["--config", str(cfg), "--experiment", "convergence", "--output", str(out), "--quiet"])
        assert code == 3
        dump = json.loads((out / "failure.json").read_text())
        assert dump["error"] == "NonConvergenceError"
        assert len(dump["state"]["center"]) == 2 and dump["history"]

    def test_success_outputs(self, tmp_path):
        out = tmp_path / "out"
        code = main(["--config", str(write(tmp_path, SMALL)), "--experiment", "ber-vs-power", "--seed", "7",
                     "--output", str(out), "--quiet"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7 and manifest["config"]["seed"] == 7
        assert manifest["kind"] == "ber-vs-power"
        assert len(manifest["realizations"]) == 2
        assert manifest["wall_clock_s"] >= 0 and manifest["library_version"]
        rows = read_csv(out / manifest["files"]["data"])
        assert len(rows) == manifest["rows"]
        assert {"P_T_dBm", "scheme", "analytic_ber", "empirical_ber", "ci95"} <= set(rows[0])
        # each row carries enough to rerun that single point
        for row in rows:
            assert row["seed"] == "7" and row["realization"] in ("0", "1")
        assert parse_config((out / "config.yaml").read_text()).seed == 7

    def test_byte_identical_reruns(self, tmp_path):
        cfg = str(write(tmp_path, SMALL))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["--config", cfg, "--experiment", "ber-vs-power", "--seed", "11", "--output",
                         str(out), "--quiet"]) == 0
            outs.append(out)
        for f in ("ber_vs_power.csv", "ber_vs_power_summary.csv"):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()

    def test_infeasible_rows_flagged(self, tmp_path):
        cfg = write(tmp_path, SMALL + "gamma_c: [1.0e-12, 1.0e-3]\n")
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--experiment", "ber-vs-crb", "--output", str(out), "--quiet"]) == 0
        rows = read_csv(out / "ber_vs_crb.csv")
        tight = [r for r in rows if float(r["gamma_c"]) == 1e-12]
        assert tight and all(r["status"] == "infeasible" for r in tight)
        assert any(r["status"] == "ok" for r in rows if float(r["gamma_c"]) == 1e-3)
        assert json.loads((out / "manifest.json").read_text())["flagged_rows"] >= len(tight)

    def test_realizations_override(self, tmp_path):
        out = tmp_path / "out"
        assert main(["--config", str(write(tmp_path, SMALL)), "--experiment", "diag-elements",
                     "--realizations", "3", "--output", str(out), "--quiet"]) == 0
        rows = read_csv(out / "diag_elements.csv")
        assert {r["realization"] for r in rows} == {"0", "1", "2"}
