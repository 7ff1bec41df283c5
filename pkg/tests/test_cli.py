import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from dcca import theory
from dcca.detrend import BoxGeometry
from dcca.cli import main
from dcca.estimator import SeriesPair, fluctuation_profile
from dcca.simulate import SCENARIOS

from oracles import ma_rho_closed, ma_theta

FIXTURES = Path(__file__).parent / "fixtures"
ASSETS = sorted(FIXTURES.glob("*.csv"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def long_table(text):
    out = {}
    for r in rows_of(text):
        out[(r["m"], r["statistic"])] = float(r["value"])
    return out


# ------------------------------------------------------------------ alpha

def test_alpha_small_box(capsys):
    code, out, _ = run(capsys, "alpha", "--m-min", 3, "--m-max", 3)
    assert code == 0
    rows = {int(r["j"]): r for r in rows_of(out)}
    assert float(rows[0]["alpha"]) == pytest.approx(0.8)
    assert float(rows[1]["alpha"]) == pytest.approx(-0.2)
    assert float(rows[3]["alpha"]) == 0.0
    assert {r["crosscheck"] for r in rows.values()} == {"ok"}


def test_alpha_last_lag_zero(capsys):
    _, out, _ = run(capsys, "alpha", "--m-min", 3, "--m-max", 30, "--nu", 2)
    for r in rows_of(out):
        if r["m"] == r["j"]:
            assert float(r["alpha"]) == 0.0


def test_alpha_closed_form_higher_order_is_usage_error(capsys):
    code, _, err = run(capsys, "alpha", "--nu", 1, "--closed-form")
    assert code == 2
    assert "nu=0" in err


def test_invalid_geometry_is_usage_error(capsys):
    code, _, _ = run(capsys, "alpha", "--m-min", 1, "--m-max", 3)
    assert code == 2


# ------------------------------------------------------------------ dcca

def test_dcca_identical_columns(tmp_path, capsys):
    z = np.random.default_rng(0).standard_normal(200)
    f = write_csv(tmp_path / "x.csv", ["a", "b"], [(v, v) for v in z])
    code, out, _ = run(capsys, "dcca", f, "--m-max", 40)
    assert code == 0
    np.testing.assert_allclose([float(r["rho"]) for r in rows_of(out)], 1.0, atol=1e-12)


def test_dcca_two_single_column_files(tmp_path, capsys):
    z = np.random.default_rng(1).standard_normal((2, 80))
    f1 = write_csv(tmp_path / "a.csv", ["a"], [(v,) for v in z[0]])
    f2 = write_csv(tmp_path / "b.csv", ["b"], [(v,) for v in z[1]])
    code, out, _ = run(capsys, "dcca", f1, f2, "--m-max", 10)
    assert code == 0
    ref = fluctuation_profile(SeriesPair(z[0], z[1]), range(3, 11))
    np.testing.assert_array_equal([float(r["rho"]) for r in rows_of(out)], ref.rho)


def test_dcca_short_file_flags_large_boxes(tmp_path, capsys):
    z = np.random.default_rng(2).standard_normal((12, 2))
    f = write_csv(tmp_path / "x.csv", ["a", "b"], z.tolist())
    code, out, _ = run(capsys, "dcca", f, "--m-min", 3, "--m-max", 15)
    assert code == 0
    rows = {int(r["m"]): r for r in rows_of(out)}
    assert rows[11]["flag"] == "" and math.isfinite(float(rows[11]["rho"]))
    assert all(rows[m]["flag"] == "insufficient_length" for m in (12, 13, 14, 15))


def test_dcca_non_numeric_cell(tmp_path, capsys):
    f = write_csv(tmp_path / "x.csv", ["a", "b"], [(1, 2), (3, 4), (5, "oops"), (7, 8)])
    code, _, err = run(capsys, "dcca", f)
    assert code == 1
    assert "row 4" in err and "column 2" in err


def test_dcca_stdin(monkeypatch, capsys):
    z = np.random.default_rng(3).standard_normal((30, 2))
    text = "a,b\n" + "\n".join(f"{a},{b}" for a, b in z) + "\n"
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    code, out, _ = run(capsys, "dcca", "-", "--m-max", 5)
    assert code == 0 and len(rows_of(out)) == 3


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_dcca_round_trip(tmp_path, capsys, fmt):
    z = np.random.default_rng(4).standard_normal((300, 2))
    z[:, 1] += 0.5 * z[:, 0]
    f = write_csv(tmp_path / "x.csv", ["a", "b"], z.tolist())
    out_path = tmp_path / f"out.{fmt}"
    assert run(capsys, "dcca", f, "--mode", "nonoverlap", "--format", fmt, "--out", out_path)[0] == 0
    ref = fluctuation_profile(SeriesPair(z[:, 0], z[:, 1]), range(3, 101), mode="non-overlapping")
    text = out_path.read_text()
    parsed = json.loads(text) if fmt == "json" else rows_of(text)
    for key, attr in (("F2_1", "f2_dfa_1"), ("F2_2", "f2_dfa_2"), ("F_DCCA", "f_dcca"), ("rho", "rho")):
        np.testing.assert_array_equal([float(r[key]) for r in parsed], getattr(ref, attr))


def test_dcca_degenerate_column(tmp_path, capsys):
    f = write_csv(tmp_path / "x.csv", ["a", "b"], [(1.0, v) for v in range(20)])
    _, out, _ = run(capsys, "dcca", f, "--m-max", 6)
    assert {r["flag"] for r in rows_of(out)} == {"degenerate_variance"}
    assert {r["rho"] for r in rows_of(out)} == {"nan"}


# ------------------------------------------------------------------ theory

def test_theory_white_noise(capsys):
    code, out, _ = run(capsys, "theory", "--scenario", "iid_gaussian_pair", "--m-max", 60)
    assert code == 0
    table = long_table(out)
    for m in range(3, 61):
        assert table[(str(m), "E_F2_1")] == pytest.approx(m / 15 + 2 / 15 - 1 / (5 * m), abs=1e-12)


def test_theory_ma_cascade_rho(capsys):
    _, out, _ = run(capsys, "theory", "--scenario", "ma_cascade", "--m-max", 50)
    table = long_table(out)
    for m in range(3, 51):
        assert table[(str(m), "rho_eps")] == pytest.approx(ma_rho_closed(m, ma_theta()), abs=1e-10)
    assert table[("", "rho_limit")] == 1.0


@pytest.mark.parametrize("kind", ["shared_noise_ar", "shared_noise_arma"])
def test_theory_shared_noise_limit(capsys, kind):
    _, out, _ = run(capsys, "theory", "--scenario", kind, "--m-max", 4)
    assert long_table(out)[("", "rho_limit")] == 1.0


def test_theory_covariances(capsys):
    _, out, _ = run(capsys, "theory", "--scenario", "bivariate_gaussian", "--param", "rho=0.3",
                    "--m-min", 5, "--m-max", 5, "--lags", 0, 7)
    table = long_table(out)
    g = BoxGeometry(5)
    wn = theory.CovarianceModel.white_noise(1, 1, 0.3)
    assert table[("5", "cov_dfa1_h0")] == pytest.approx(theory.fluctuation_covariance(wn, g, 0))
    assert table[("5", "cov_dcca_h7")] == 0.0


def test_unknown_scenario(capsys):
    code, _, err = run(capsys, "theory", "--scenario", "garch")
    assert code == 2
    assert all(name in err for name in SCENARIOS)


def test_bad_parameter(capsys):
    assert run(capsys, "theory", "--scenario", "ar1_driven", "--param", "phi=1.5")[0] == 2
    assert run(capsys, "theory", "--scenario", "ar1_driven", "--param", "phi")[0] == 2


# ------------------------------------------------------------------ simulate / mc

def test_simulate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        run(capsys, "simulate", "--scenario", "shared_noise_arma", "--n", 500, "--seed", 7, "--out", path)
    assert a.read_bytes() == b.read_bytes()
    assert len(rows_of(a.read_text())) == 500


def mc_config(path, scenario="bivariate_gaussian", reps=1, extra=""):
    path.write_text(
        f"[mc]\nscenario = {scenario}\nreps = {reps}\nn = 300\nseed = 5\nm_min = 3\nm_max = 12\n{extra}"
        "\n[params]\n" + ("rho = 0.5\n" if scenario == "bivariate_gaussian" else "")
    )
    return path


def test_mc_single_replication_echoes_estimate(tmp_path, capsys):
    from dcca.simulate import ScenarioSpec, generate, make_rng

    code, out, _ = run(capsys, "mc", mc_config(tmp_path / "c.ini"))
    assert code == 0
    table = long_table(out)
    pair = generate(ScenarioSpec("bivariate_gaussian", n=300, seed=5, params={"rho": 0.5}), make_rng(5, 0))
    ref = fluctuation_profile(pair, range(3, 13))
    for m, rho in zip(range(3, 13), ref.rho):
        assert table[(str(m), "rho.median")] == rho
        assert table[(str(m), "rho.q05")] == rho
        assert table[(str(m), "rho.theory")] == pytest.approx(0.5, abs=1e-14)


def test_mc_threads_do_not_change_output(tmp_path, capsys, monkeypatch):
    cfg = mc_config(tmp_path / "c.ini", reps=8)
    monkeypatch.setenv("DCCA_THREADS", "1")
    out1 = run(capsys, "mc", cfg)[1]
    monkeypatch.setenv("DCCA_THREADS", "4")
    out4 = run(capsys, "mc", cfg)[1]
    assert out1 == out4


def test_mc_compare_modes(tmp_path, capsys):
    cfg = mc_config(tmp_path / "c.ini", scenario="ma_cascade", reps=3, extra="compare_modes = yes\n")
    _, out, _ = run(capsys, "mc", cfg)
    labels = {r["scenario"] for r in rows_of(out)}
    assert labels == {"ma_cascade[overlapping]", "ma_cascade[non-overlapping]"}


def test_mc_unknown_scenario(tmp_path, capsys):
    code, _, err = run(capsys, "mc", mc_config(tmp_path / "c.ini", scenario="nonsense"))
    assert code == 2 and "bivariate_gaussian" in err


def test_mc_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[mc]\nscenario = iid_gaussian_pair\nrepetitions = 3\n")
    assert run(capsys, "mc", bad)[0] == 2
    assert run(capsys, "mc", tmp_path / "missing.ini")[0] == 2


# ------------------------------------------------------------------ empirical

def test_empirical_fixture_alignment(capsys):
    code, out, _ = run(capsys, "empirical", *ASSETS, "--m-max", 20)
    assert code == 0
    rows = rows_of(out)
    assert {int(r["n_returns"]) for r in rows} == {349}
    pairs = {(r["asset_1"], r["asset_2"]) for r in rows}
    assert len(pairs) == 10
    assert all(math.isfinite(float(r["rho"])) for r in rows)


def test_empirical_pair_symmetry(capsys):
    _, out, _ = run(capsys, "empirical", *ASSETS[:3], "--m-max", 30, "--both-orders")
    rows = rows_of(out)
    by_pair = {}
    for r in rows:
        by_pair.setdefault((r["asset_1"], r["asset_2"]), []).append(r["rho"])
    assert len(by_pair) == 6
    for (a, b), rho in by_pair.items():
        assert by_pair[(b, a)] == rho


def test_empirical_matches_direct_computation(capsys):
    from dcca.cli import align_prices, log_returns, read_prices

    _, out, _ = run(capsys, "empirical", ASSETS[0], ASSETS[1], "--m-max", 15, "--transform", "abs_log_return")
    tables = {p.stem: read_prices(str(p)) for p in ASSETS[:2]}
    dates, aligned = align_prices(tables)
    r = [log_returns(aligned[p.stem], "abs_log_return") for p in ASSETS[:2]]
    assert np.all(r[0] >= 0)
    ref = fluctuation_profile(SeriesPair(*r), range(3, 16))
    np.testing.assert_array_equal([float(x["rho"]) for x in rows_of(out)], ref.rho)


def test_empirical_disjoint_dates(tmp_path, capsys):
    a = write_csv(tmp_path / "a.csv", ["date", "p"], [("2020-01-01", 1), ("2020-01-02", 2)])
    b = write_csv(tmp_path / "b.csv", ["date", "p"], [("2021-01-01", 1), ("2021-01-02", 2)])
    code, _, err = run(capsys, "empirical", a, b)
    assert code == 1 and "share no dates" in err


def test_empirical_non_positive_price(tmp_path, capsys):
    a = write_csv(tmp_path / "a.csv", ["date", "p"], [("2020-01-01", 1), ("2020-01-02", 0)])
    b = write_csv(tmp_path / "b.csv", ["date", "p"], [("2020-01-01", 1), ("2020-01-02", 2)])
    assert run(capsys, "empirical", a, b)[0] == 1


@pytest.mark.parametrize("second", ["2020-01-01", "2019-12-31"])
def test_empirical_duplicate_or_unordered_dates(tmp_path, capsys, second):
    a = write_csv(tmp_path / "a.csv", ["date", "p"], [("2020-01-01", 1), (second, 2)])
    b = write_csv(tmp_path / "b.csv", ["date", "p"], [("2020-01-01", 1), ("2020-01-02", 2)])
    code, _, err = run(capsys, "empirical", a, b)
    assert code == 1 and "row 3" in err


def test_empirical_bad_date(tmp_path, capsys):
    a = write_csv(tmp_path / "a.csv", ["date", "p"], [("01/02/2020", 1)])
    b = write_csv(tmp_path / "b.csv", ["date", "p"], [("2020-01-01", 1)])
    assert run(capsys, "empirical", a, b)[0] == 1


def test_empirical_constant_price_is_degenerate(tmp_path, capsys):
    days = [f"2020-02-{d:02d}" for d in range(1, 29)]
    rng = np.random.default_rng(0)
    a = write_csv(tmp_path / "flat.csv", ["date", "p"], [(d, 10.0) for d in days])
    b = write_csv(tmp_path / "walk.csv", ["date", "p"], [(d, float(np.exp(v))) for d, v in zip(days, rng.standard_normal(28).cumsum() * 0.01)])
    code, out, _ = run(capsys, "empirical", a, b, "--m-max", 10)
    assert code == 0
    assert {r["flag"] for r in rows_of(out)} == {"degenerate_variance"}


def test_empirical_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        run(capsys, "empirical", *ASSETS, "--format", "json", "--out", path)
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    assert data[0]["asset_1"] == "ALPHA"
