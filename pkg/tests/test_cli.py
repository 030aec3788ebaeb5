import datetime as dt
import io
import json
from pathlib import Path

import numpy as np
import pytest

from occmarkov import io as oio
from occmarkov.chain import N_SLOTS, StateBinning, homogeneous_model
from occmarkov.cli import main, native_step
from occmarkov.ingest import DayTrace
from occmarkov.simulate import SimulationConfig, sample_ensemble

DATA = Path(__file__).parent / "data"
MAHDAVI_ZONES = ["KI", "O1_1", "O1_2", "O1_3", "O1_4", "O1_5", "O2", "O3", "O4"]


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def dong(tmp_path_factory):
    d = tmp_path_factory.mktemp("dong")
    code, _, err = run("ingest", DATA / "dong_events.csv", "-o", d / "m.json")
    assert code == 0, err
    code, _, err = run("train", d / "m.json", "--zone", "Z1", "-M", "2", "-o", d / "model.json")
    assert code == 0, err
    return d


@pytest.fixture(scope="module")
def counts_csv(tmp_path_factory):
    # birth-death chain on 0..9 so that an 8-state model is possible
    n = 10
    p = np.zeros((n, n))
    for c in range(n):
        nb = [x for x in (c - 1, c + 1) if 0 <= x < n]
        p[c, nb] = 1 / len(nb)
    model = homogeneous_model(np.full(n, 1 / 15), p, initial_distribution=np.full(n, 1 / n))
    days = sample_ensemble(model, SimulationConfig(15, seed=2))
    path = tmp_path_factory.mktemp("counts") / "counts.csv"
    path.write_text(oio.event_csv(days))
    return path


def test_ingest_mahdavi_shape(tmp_path):
    code, out, _ = run("ingest", DATA / "mahdavi_wide.csv", "-o", tmp_path / "a.json")
    assert code == 0
    doc = oio.load_archive(tmp_path / "a.json")
    assert sorted(doc["zones"]) == sorted(MAHDAVI_ZONES)
    assert doc["diagnostics"]["days"] == {z: 10 for z in MAHDAVI_ZONES}
    assert doc["config"]["parameters"]["format"] == "auto"


def test_ingest_dong_shape(dong):
    doc = oio.load_archive(dong / "m.json")
    assert sorted(doc["zones"]) == [f"Z{i}" for i in range(1, 7)]
    assert all(len(v) == 10 for v in doc["zones"].values())


def test_ingest_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    code, _, err = run("ingest", p, "-o", tmp_path / "a.json")
    assert code != 0
    assert err.startswith("error: EmptyInput: ") and err.count("\n") == 1


def test_ingest_bad_row_names_file_and_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,zone,value\n2015-04-13 09:00,Z1,1\n2015-04-13 09:05,Z1,-2\n")
    code, _, err = run("ingest", p, "-o", tmp_path / "a.json")
    assert code == 1 and err.startswith("error: NegativeValue: bad.csv: row 3")


def test_train_presence(dong):
    model = oio.load_model(dong / "model.json")
    assert model.n_states == 2 and model.zone_id == "Z1"
    doc = json.loads((dong / "model.json").read_text())
    assert doc["config"]["parameters"]["states"] == 2
    assert doc["metadata"]["n_days"] == 10


def test_train_counts_m8(counts_csv, tmp_path):
    assert run("ingest", counts_csv, "-o", tmp_path / "c.json")[0] == 0
    code, _, err = run("train", tmp_path / "c.json", "-M", "8", "-o", tmp_path / "m.json")
    assert code == 0, err
    model = oio.load_model(tmp_path / "m.json")
    assert model.n_states == 8 and len(model.slots) == N_SLOTS


def test_train_too_many_states(dong, tmp_path):
    code, _, err = run("train", dong / "m.json", "--zone", "Z2", "-M", "3", "-o", tmp_path / "x.json")
    assert code == 1 and err.startswith("error: TooFewCounts:")


def test_train_unknown_zone(dong, tmp_path):
    code, _, err = run("train", dong / "m.json", "--zone", "nope", "-o", tmp_path / "x.json")
    assert code == 1 and err.startswith("error: UnknownZone:")


def test_generate_byte_identical(dong, tmp_path):
    for name in ("a", "b"):
        code, _, _ = run("generate", dong / "model.json", "--n-days", 250, "--seed", 42,
                         "-o", tmp_path / f"{name}.json", "--csv", tmp_path / f"{name}.csv")
        assert code == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_generate_corrupt_model(dong, tmp_path):
    doc = json.loads((dong / "model.json").read_text())
    del doc["slots"][7]["support_mask"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run("generate", bad, "-o", tmp_path / "g.json")
    assert code == 1 and "SchemaError" in err and "slots[7].support_mask" in err


def test_generate_then_ingest_roundtrip(dong, tmp_path):
    run("generate", dong / "model.json", "--n-days", 30, "--seed", 7, "-o", tmp_path / "g.json",
        "--csv", tmp_path / "g.csv")
    code, _, _ = run("ingest", tmp_path / "g.csv", "-o", tmp_path / "re.json")
    assert code == 0
    assert oio.load_traces(tmp_path / "re.json") == oio.load_traces(tmp_path / "g.json")


def test_evaluate_self_all_zero(dong, tmp_path):
    code, out, _ = run("evaluate", dong / "m.json", dong / "m.json", "-o", tmp_path / "r.json",
                       "--csv", tmp_path / "r.csv", "--strict")
    assert code == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["passed"] and len(doc["zones"]) == 6
    for z in doc["zones"]:
        assert max(z["timeseries_njsd"]) == 0 and z["flags"] == []
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "zone,minute,statistic,value"


def test_evaluate_strict_threshold_zero(dong, tmp_path):
    run("generate", dong / "model.json", "--n-days", 20, "-o", tmp_path / "g.json")
    code, _, _ = run("evaluate", dong / "m.json", tmp_path / "g.json", "-o", tmp_path / "r.json",
                     "--threshold", 0, "--strict")
    assert code != 0
    code, _, _ = run("evaluate", dong / "m.json", tmp_path / "g.json", "-o", tmp_path / "r.json",
                     "--threshold", 0)
    assert code == 0


def test_evaluate_uses_generated_binning(dong, tmp_path):
    run("generate", dong / "model.json", "--n-days", 20, "-o", tmp_path / "g.json")
    doc = oio.load_archive(tmp_path / "g.json")
    assert oio.archive_binnings(doc) == {"Z1": StateBinning.identity(1)}


def test_config_file_and_flag_precedence(dong, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 5\nn_days = 3\n[generate]\nn_days = 4\n')
    run("generate", dong / "model.json", "--config", cfg, "-o", tmp_path / "a.json")
    run("generate", dong / "model.json", "--config", cfg, "--n-days", 6, "-o", tmp_path / "b.json")
    a, b = oio.load_archive(tmp_path / "a.json"), oio.load_archive(tmp_path / "b.json")
    assert a["config"]["parameters"]["seed"] == 5 and len(a["zones"]["Z1"]) == 4
    assert len(b["zones"]["Z1"]) == 6


def test_config_unknown_key(dong, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("sed = 5\n")
    code, _, err = run("generate", dong / "model.json", "--config", cfg, "-o", tmp_path / "a.json")
    assert code == 1 and err.startswith("error: ConfigError:")


def test_rerun_from_embedded_config(dong, tmp_path):
    run("generate", dong / "model.json", "--n-days", 9, "--seed", 77, "-o", tmp_path / "a.json")
    run("generate", dong / "model.json", "--config", tmp_path / "a.json", "-o", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_pipeline(tmp_path):
    code, out, err = run("pipeline", DATA / "dong_events.csv", "-o", tmp_path, "--zone", "Z3",
                         "--n-days", 50, "--seed", 1)
    assert code == 0, err
    assert {"measured.json", "model_Z3.json", "generated.json", "report.json", "report.csv"} <= {
        p.name for p in tmp_path.iterdir()}
    assert out.startswith("Z3: max per-minute NJSD")


def test_missing_input(tmp_path):
    code, _, err = run("ingest", tmp_path / "nope.csv", "-o", tmp_path / "a.json")
    assert code == 1 and err.startswith("error: FileNotFound:")


def test_native_step():
    d = dt.date(2013, 1, 7)
    v = np.zeros(96, int)
    v[31:40] = 1  # changes at minutes 465 and 600
    assert native_step([DayTrace(d, "A", v)]) == 15
    w = np.zeros(1440, int)
    w[503:520] = 1
    assert native_step([DayTrace(d, "A", w)]) == 1
