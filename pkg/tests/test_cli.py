import csv
import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbl.cli import canonical_json, main, parse_orders
from sbl.clickstream import ClickStream
from sbl.errors import CorruptFileError
from sbl.statmodels import read_pmf
from sbl.tagfile import HEADER_SIZE, MAGIC, from_bytes, from_csv, read_tag, to_bytes, to_csv, write_tag


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, name="cfg.json", **over):
    cfg = {
        "source": {"model": "poisson", "n_bar": 0.1},
        "detector": {"m_channels": 31, "eta": 0.6, "dark_prob": 1e-6},
        "pulse_count": 20_000,
        "seed": 9,
    }
    cfg.update(over)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


# --- tag files ------------------------------------------------------------------

def test_header_layout():
    s = ClickStream(np.array([0, 5, 1 << 30], dtype=np.uint32), 31, 12_500)
    raw = to_bytes(s)
    assert raw[:8] == MAGIC
    assert struct.unpack_from("<BQQ", raw, 8) == (31, 12_500, 3)
    assert len(raw) == HEADER_SIZE + 3 * 12
    assert struct.unpack_from("<QI", raw, HEADER_SIZE + 12) == (1, 5)


@settings(max_examples=50, deadline=None)
@given(
    m=st.integers(1, 32),
    masks=st.lists(st.integers(0, 2**32 - 1), max_size=60),
    start=st.integers(0, 2**40),
    period=st.integers(1, 2**40),
)
def test_tag_round_trip_both_formats(m, masks, start, period):
    arr = np.array(masks, dtype=np.uint64) & np.uint64((1 << m) - 1)
    s = ClickStream(arr.astype(np.uint32), m, period, np.arange(start, start + len(masks), dtype=np.uint64))
    assert from_bytes(to_bytes(s)) == s
    assert from_csv(to_csv(s)) == s


def test_csv_format_lists_one_click_per_row():
    s = ClickStream(np.array([0b101, 0, 0b10], dtype=np.uint32), 4)
    text = to_csv(s)
    assert text.splitlines()[4:] == ["pulse_index,channel", "0,0", "0,2", "2,1"]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XXXXXXXX" + b[8:],
        lambda b: b[:8] + bytes([0]) + b[9:],
        lambda b: b[:8] + bytes([40]) + b[9:],
        lambda b: b[:-1],
        lambda b: b[:10],
    ],
)
def test_corrupt_binary_files(tmp_path, mutate):
    s = ClickStream(np.array([1, 2, 3], dtype=np.uint32), 4)
    p = tmp_path / "bad.sbltag"
    p.write_bytes(mutate(to_bytes(s)))
    with pytest.raises(CorruptFileError):
        read_tag(p)


def test_binary_mask_beyond_channels_is_corrupt():
    raw = bytearray(to_bytes(ClickStream(np.array([1], dtype=np.uint32), 4)))
    struct.pack_into("<I", raw, HEADER_SIZE + 8, 1 << 5)
    with pytest.raises(CorruptFileError):
        from_bytes(bytes(raw))


def test_read_tag_autodetects(tmp_path):
    s = ClickStream(np.array([3, 0, 1], dtype=np.uint32), 2)
    assert read_tag(write_tag(s, tmp_path / "a.bin")) == s
    assert read_tag(write_tag(s, tmp_path / "a.txt", "csv")) == s


# --- simulate -------------------------------------------------------------------

def test_simulate_four_empty_pulses(tmp_path):
    cfg = write_config(tmp_path, source={"model": "point", "n": 0}, pulse_count=4,
                       detector={"m_channels": 31, "eta": 0.6, "dark_prob": 0.0})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    raw = (tmp_path / "o" / "stream.sbltag").read_bytes()
    assert len(raw) == HEADER_SIZE + 4 * 12
    assert not read_tag(tmp_path / "o" / "stream.sbltag").masks.any()


def test_simulate_is_reproducible_and_thread_independent(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"])
    monkeypatch.setenv("SBL_THREADS", "3")
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c")])
    ref = (tmp_path / "a" / "stream.sbltag").read_bytes()
    assert (tmp_path / "b" / "stream.sbltag").read_bytes() == ref
    assert (tmp_path / "c" / "stream.sbltag").read_bytes() == ref


def test_summary_matches_header(tmp_path):
    cfg = write_config(tmp_path, pulse_count=1_000_000)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "summary.json").read_text())
    raw = (tmp_path / "stream.sbltag").read_bytes()
    assert summary["pulses"] == struct.unpack_from("<Q", raw, 17)[0] == 1_000_000


def test_manifest_hash_matches_embedded_config(tmp_path):
    cfg = write_config(tmp_path)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--seed", "77"])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 77 and man["config"]["seed"] == 77
    assert hashlib.sha256(canonical_json(man["config"]).encode()).hexdigest() == man["config_sha256"]
    assert man["version"]


def test_invalid_config_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, transmittance=2.0)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["exit_code"] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_config_exit_3(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 3


# --- correlate ------------------------------------------------------------------

def test_correlate_hand_built_file(tmp_path):
    write_tag(ClickStream.from_counts([2, 0], 4), tmp_path / "t.sbltag")
    assert main(["correlate", str(tmp_path / "t.sbltag"), "--out", str(tmp_path), "--orders", "2"]) == 0
    (row,) = rows(tmp_path / "gN.csv")
    assert row["order"] == "2" and float(row["value"]) == 1.0 and row["pulses"] == "2"
    trace = rows(tmp_path / "trace.csv")
    assert [r["lag_index"] for r in trace] == ["-1", "0", "1"]


def test_correlate_all_zero_exit_4(tmp_path, capsys):
    write_tag(ClickStream(np.zeros(10, dtype=np.uint32), 4), tmp_path / "z.sbltag")
    assert main(["correlate", str(tmp_path / "z.sbltag"), "--out", str(tmp_path)]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "degenerate"


def test_correlate_corrupt_exit_3(tmp_path):
    p = tmp_path / "c.sbltag"
    p.write_bytes(b"SBLTAG01\x00" + bytes(16))
    assert main(["correlate", str(p), "--out", str(tmp_path)]) == 3


def test_correlate_lag_too_large_exit_2(tmp_path):
    write_tag(ClickStream.from_counts([1, 2, 0], 4), tmp_path / "t.sbltag")
    assert main(["correlate", str(tmp_path / "t.sbltag"), "--max-lag", "3", "--out", str(tmp_path)]) == 2


def test_simulate_correlate_matches_sweep(tmp_path):
    cfg = write_config(tmp_path, pulse_count=200_000, source={"model": "bose_einstein", "n_bar": 0.3, "n_max": 60})
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")])
    main(["correlate", str(tmp_path / "sim" / "stream.sbltag"), "--out", str(tmp_path / "sim"), "--orders", "2..4"])
    sweep_doc = tmp_path / "sweep.json"
    sweep_doc.write_text(json.dumps([json.loads(cfg.read_text())]))
    main(["sweep", "--config", str(sweep_doc), "--out", str(tmp_path / "sw"), "--orders", "2..4"])
    (sw,) = rows(tmp_path / "sw" / "sweep.csv")
    for r in rows(tmp_path / "sim" / "gN.csv"):
        o = r["order"]
        assert sw[f"g{o}"] == r["value"]
        assert sw[f"g{o}_std_error"] == r["std_error"]


# --- pmf / zeta / fit -------------------------------------------------------------

def test_pmf_poisson_row(tmp_path):
    assert main(["pmf", "--model", "poisson", "--n-bar", "1", "--n-max", "40", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "pmf.csv")
    assert float(r[0]["log10_p"]) == pytest.approx(-0.43429, abs=5e-6)
    d = read_pmf(tmp_path / "pmf.csv")
    assert abs(d.pmf.sum() - 1) < 1e-12
    assert d.model_tag == "poisson"


def test_pmf_superbunching_first_row(tmp_path):
    main(["pmf", "--model", "superbunching", "--n-bar", "0.1", "--n-max", "200", "--out", str(tmp_path)])
    r = rows(tmp_path / "pmf.csv")
    # the complement policy leaves the N >= 1 weights as they are
    assert float(r[1]["log10_p"]) == pytest.approx(-0.8777, abs=1e-4)


def test_pmf_overlays(tmp_path):
    main(["pmf", "--model", "bsv", "--n-bar", "0.5", "--n-max", "100", "--overlay", "--out", str(tmp_path)])
    r = rows(tmp_path / "pmf.csv")
    assert set(r[0]) == {"n", "log10_p", "poisson_log10_p", "bose_einstein_log10_p"}


def test_pmf_normalization_failure_exit_2(tmp_path, capsys):
    code = main(["pmf", "--model", "superbunching", "--n-bar", "100", "--n-max", "1000000", "--out", str(tmp_path)])
    assert code == 2
    assert "renormalize" in json.loads(capsys.readouterr().err)["message"]


def test_pmf_from_tag(tmp_path):
    write_tag(ClickStream.from_counts([0, 1, 0, 2], 4), tmp_path / "t.sbltag")
    main(["pmf", "--tag", str(tmp_path / "t.sbltag"), "--out", str(tmp_path)])
    r = rows(tmp_path / "pmf.csv")
    assert [x["log10_p"] for x in r] == ["-0.3010299956639812", "-0.6020599913279624", "-0.6020599913279624", "-inf", "-inf"]


def _pmf(tmp_path, name, *args):
    out = tmp_path / name
    main(["pmf", *args, "--out", str(out)])
    return out / "pmf.csv"


def test_zeta_identical_is_zero(tmp_path):
    a = _pmf(tmp_path, "a", "--model", "poisson", "--n-bar", "0.5", "--n-max", "20")
    main(["zeta", str(a), str(a), "--n-range", "0..5", "--out", str(tmp_path)])
    assert [float(r["log10_zeta"]) for r in rows(tmp_path / "zeta.csv")] == [0.0] * 6


def test_zeta_superbunching_vs_poisson(tmp_path):
    a = _pmf(tmp_path, "sb", "--model", "superbunching", "--n-bar", "1.99e-4", "--n-max", "200")
    b = _pmf(tmp_path, "co", "--model", "poisson", "--n-bar", "1.99e-4", "--n-max", "200")
    main(["zeta", str(a), str(b), "--n-range", "31..31", "--out", str(tmp_path)])
    (r,) = rows(tmp_path / "zeta.csv")
    assert float(r["log10_zeta"]) == pytest.approx(110.26, abs=0.05)


def test_zeta_thermal_vs_poisson(tmp_path):
    a = _pmf(tmp_path, "th", "--model", "bose_einstein", "--n-bar", "0.1", "--n-max", "60")
    b = _pmf(tmp_path, "co", "--model", "poisson", "--n-bar", "0.1", "--n-max", "60")
    main(["zeta", str(a), str(b), "--n-range", "5..5", "--out", str(tmp_path)])
    assert float(rows(tmp_path / "zeta.csv")[0]["log10_zeta"]) == pytest.approx(1.874, abs=1e-3)


def test_zeta_marks_undefined_rows(tmp_path):
    write_tag(ClickStream.from_counts([0, 1, 0, 1], 4), tmp_path / "t.sbltag")
    a = _pmf(tmp_path, "emp", "--tag", str(tmp_path / "t.sbltag"))
    b = _pmf(tmp_path, "co", "--model", "poisson", "--n-bar", "0.5", "--n-max", "4")
    main(["zeta", str(a), str(b), "--out", str(tmp_path)])
    r = rows(tmp_path / "zeta.csv")
    assert len(r) == 5
    assert r[2]["log10_zeta"] == "undefined"
    assert r[0]["log10_zeta"] != "undefined"


def _gn(tmp_path, points):
    p = tmp_path / "g.csv"
    p.write_text("order,value,std_error,pulses\n" + "".join(f"{o},{v},0.0,1\n" for o, v in points))
    return p


def test_fit_quoted_values(tmp_path):
    p = _gn(tmp_path, [(2, 75), (3, 9.54e4), (4, 1.29e6), (5, 2.72e8)])
    assert main(["fit", str(p), "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert 4.5 <= fit["slope"] <= 5.5


def test_fit_underdetermined_exit_2(tmp_path):
    assert main(["fit", str(_gn(tmp_path, [(2, 75)])), "--out", str(tmp_path)]) == 2


# --- sweep ----------------------------------------------------------------------

def test_sweep_with_base_and_failure(tmp_path, capsys):
    doc = {
        "base": {"source": {"model": "poisson", "n_bar": 0.2}, "pulse_count": 10_000, "seed": 3},
        "configs": [
            {"transmittance": 1.0},
            {"source": {"model": "point", "n": 0}, "detector": {"dark_prob": 0.0}},
            {"transmittance": 0.5},
        ],
    }
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(doc))
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path), "--orders", "2"]) == 0
    r = rows(tmp_path / "sweep.csv")
    assert len(r) == 3
    assert r[0]["error"] == "" and r[2]["error"] == ""
    assert r[1]["error"].startswith("degenerate")
    assert "degenerate" in capsys.readouterr().err


def test_empty_sweep_exit_2(tmp_path):
    p = tmp_path / "sweep.json"
    p.write_text("[]")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_parse_orders():
    assert parse_orders("2..5") == [2, 3, 4, 5]
    assert parse_orders("2,4") == [2, 4]
    with pytest.raises(Exception):
        parse_orders("1..3")


def test_csv_outputs_use_lf(tmp_path):
    write_tag(ClickStream.from_counts([2, 0, 1], 4), tmp_path / "t.sbltag")
    main(["correlate", str(tmp_path / "t.sbltag"), "--out", str(tmp_path), "--orders", "2"])
    assert b"\r" not in (tmp_path / "gN.csv").read_bytes()
