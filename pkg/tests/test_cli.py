import json
from pathlib import Path

import pytest

from pspin.cli import load_config, main
from pspin.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "pspin" / "configs"


def write_config(tmp_path, body, name="exp.toml"):
    path = tmp_path / name
    path.write_text(body)
    return path


SK_H1 = """
[mixture]
gamma_sq = [[2, 0.5]]
h = 1.0

[solver]
grid_size = 200
tol = 1e-6

[chaos]
t_count = 5

[mc]
N_list = [30]
seeds = 3
restarts = 2
max_iters = 400

[output]
json_path = "out.json"
csv_path = "out.csv"
"""

PURE3 = """
[mixture]
gamma_sq = [[3, 0.3333333333333333]]

[solver]
grid_size = 200
tol = 1e-5

[output]
json_path = "p3.json"
csv_path = "p3.csv"
"""


class TestConfigLoading:
    def test_valid_config(self, tmp_path):
        cfg = load_config(write_config(tmp_path, SK_H1))
        assert cfg.mixture.h == 1.0
        assert cfg.solver.grid_size == 200

    def test_malformed_power_names_field(self, tmp_path):
        bad = SK_H1.replace("[[2, 0.5]]", "[[1, 0.5]]")
        with pytest.raises(ConfigError, match="mixture"):
            load_config(write_config(tmp_path, bad))

    def test_empty_mixture_rejected(self, tmp_path):
        bad = SK_H1.replace("gamma_sq = [[2, 0.5]]", "gamma_sq = []")
        with pytest.raises(ConfigError, match="gamma"):
            load_config(write_config(tmp_path, bad))

    def test_wrong_type_names_field(self, tmp_path):
        bad = SK_H1.replace("grid_size = 200", 'grid_size = "big"')
        with pytest.raises(ConfigError, match="solver.grid_size"):
            load_config(write_config(tmp_path, bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")


class TestSolve:
    def test_sk_h1_solution(self, tmp_path):
        cfg_path = write_config(tmp_path, SK_H1)
        code = main(["solve", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert code == 0
        data = json.loads((tmp_path / "out.solve.json").read_text())
        assert data["schema_version"] == 1
        assert data["phase"] == "RS"
        assert abs(data["gs"] - 2**0.5) <= 1e-4
        header = (tmp_path / "out.solve.csv").read_text().splitlines()[0]
        assert header == "u,g"

    def test_pure3_matches_closed_form(self, tmp_path):
        from pspin import closed_form_1rsb

        cfg_path = write_config(tmp_path, PURE3)
        code = main(["solve", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert code == 0
        data = json.loads((tmp_path / "p3.solve.json").read_text())
        oracle = closed_form_1rsb(3, grid_size=200)
        assert data["phase"] == "OneRSB"
        assert abs(data["gs"] - oracle.gs_value) <= 1e-3
        assert abs(data["L0"] - oracle.L0) <= 1e-2

    def test_malformed_config_exit_code(self, tmp_path, capsys):
        bad = write_config(tmp_path, SK_H1.replace("[[2, 0.5]]", "[[1, 0.5]]"))
        code = main(["solve", "--config", str(bad), "--out", str(tmp_path)])
        assert code == 1
        assert "mixture" in capsys.readouterr().err


class TestPhase:
    def test_phase_json(self, tmp_path):
        cfg_path = write_config(tmp_path, PURE3)
        assert main(["phase", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "p3.phase.json").read_text())
        assert data["phase"] == "OneRSB"
        assert "closed_form" in data


class TestChaos:
    def test_field_case_hand_value(self, tmp_path):
        cfg_path = write_config(tmp_path, SK_H1)
        assert main(["chaos", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "out.chaos.csv").read_text().strip().splitlines()[1:]
        grid = {float(r.split(",")[0]): float(r.split(",")[1]) for r in rows}
        # u_t = 1/(2-t): at the middle node t = 0.5 the root is 2/3
        assert abs(grid[0.5] - 2.0 / 3.0) <= 1e-9
        data = json.loads((tmp_path / "out.chaos.json").read_text())
        assert abs(data["chi"] - 0.25) <= 1e-9

    def test_no_field_all_zero(self, tmp_path):
        cfg = SK_H1.replace("h = 1.0", "h = 0.0")
        cfg_path = write_config(tmp_path, cfg)
        assert main(["chaos", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "out.chaos.csv").read_text().strip().splitlines()[1:]
        assert all(float(r.split(",")[1]) == 0.0 for r in rows)

    def test_odd_mixture_exit_one(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, PURE3)
        code = main(["chaos", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert code == 1
        assert "even" in capsys.readouterr().err


class TestSimulate:
    def test_schema_and_determinism(self, tmp_path):
        cfg = SK_H1 + "\n"
        cfg_path = write_config(tmp_path, cfg)
        out1 = tmp_path / "r1"
        out2 = tmp_path / "r2"
        for out in (out1, out2):
            assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
        b1 = (out1 / "out.simulate.csv").read_bytes()
        assert b1 == (out2 / "out.simulate.csv").read_bytes()
        assert (out1 / "out.simulate.json").read_bytes() == (
            out2 / "out.simulate.json"
        ).read_bytes()
        header = b1.decode().splitlines()[0]
        assert header == "N,seed,t,energy,overlap,restarts,converged"

    def test_coupled_summary_has_per_t_means(self, tmp_path):
        cfg = SK_H1.replace("N_list = [30]", "N_list = [30]\nt = [0.25, 0.75]")
        cfg_path = write_config(tmp_path, cfg)
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "out.simulate.json").read_text())
        assert [row["t"] for row in data["coupled"]] == [0.25, 0.75]
        assert all("mean_overlap" in row for row in data["coupled"])

    def test_seed_offset_resumes(self, tmp_path):
        cfg_path = write_config(tmp_path, SK_H1)
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
        assert (
            main(
                [
                    "simulate",
                    "--config",
                    str(cfg_path),
                    "--out",
                    str(tmp_path),
                    "--seed-offset",
                    "3",
                ]
            )
            == 0
        )
        rows = (tmp_path / "out.simulate.csv").read_text().strip().splitlines()[1:]
        seeds = [int(r.split(",")[1]) for r in rows]
        assert seeds == [0, 1, 2, 3, 4, 5]

    def test_threads_do_not_change_results(self, tmp_path):
        cfg_path = write_config(tmp_path, SK_H1)
        out1 = tmp_path / "t1"
        out2 = tmp_path / "t2"
        assert main(["simulate", "--config", str(cfg_path), "--out", str(out1)]) == 0
        assert (
            main(
                [
                    "simulate",
                    "--config",
                    str(cfg_path),
                    "--out",
                    str(out2),
                    "--threads",
                    "4",
                ]
            )
            == 0
        )
        assert (out1 / "out.simulate.csv").read_bytes() == (
            out2 / "out.simulate.csv"
        ).read_bytes()

    def test_cap_violation_before_sampling(self, tmp_path):
        cfg = SK_H1.replace("N_list = [30]", "N_list = [30]\nmax_scalars = 100")
        cfg_path = write_config(tmp_path, cfg)
        code = main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)])
        assert code == 1
        assert not (tmp_path / "out.simulate.csv").exists()


class TestVerify:
    def test_bundled_configs_pass(self, tmp_path, capsys):
        for name in ("sk_h1.toml", "frsb_mix.toml", "pure_p3.toml", "sk_h0_mc.toml"):
            code = main(["verify", "--config", str(CONFIG_DIR / name)])
            out = capsys.readouterr().out
            assert code == 0, f"{name} failed:\n{out}"
            assert "all invariants passed" in out

    def test_injected_fault_names_invariant(self, tmp_path, capsys):
        cfg = SK_H1.replace("tol = 1e-6", "tol = 1e-6\nmargin = -1.0")
        cfg_path = write_config(tmp_path, cfg)
        code = main(["verify", "--config", str(cfg_path)])
        out = capsys.readouterr().out
        assert code == 1
        assert "solver.margin > 0" in out
        assert "FAIL" in out

    def test_empty_mixture_exit_one(self, tmp_path, capsys):
        bad = write_config(tmp_path, SK_H1.replace("gamma_sq = [[2, 0.5]]", "gamma_sq = []"))
        code = main(["verify", "--config", str(bad)])
        assert code == 1
        assert "gamma" in capsys.readouterr().err
