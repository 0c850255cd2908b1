import csv
import io
import json

import pytest

from mcsc.errors import ConfigError
from mcsc.harness import cli
from mcsc.harness.config import PRESET_NAMES, config_from_dict, load_preset, resolve_config
from mcsc.harness.runner import (
    CSV_COLUMNS,
    compare_strategies,
    config_with,
    derive_metrics,
    metrics_csv,
    records_from_text,
    run_scenario,
)


def small(**overrides) -> dict:
    doc = {
        "name": "small",
        "total_slots": 2000,
        "rng_seed": 11,
        "interference": {"per_packet_loss_prob": 0.02, "bit_error_prob": 1e-4},
        "nodes": [
            {"address": 1, "role": "MASTER", "drift_rate": 1e-4},
            {"address": 2, "traffic": 0.5, "drift_rate": -1e-4},
        ],
    }
    doc.update(overrides)
    return doc


def with_strategy(doc: dict, strategy: str, **fields) -> dict:
    doc = json.loads(json.dumps(doc))
    doc["name"] = strategy.lower()
    for node in doc["nodes"]:
        node["strategy"] = strategy
        node.update(fields)
    return doc


def test_all_presets_load():
    for name in PRESET_NAMES:
        cfg = load_preset(name)
        assert cfg.name == name
    with pytest.raises(ConfigError):
        load_preset("nope")


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.update(total_slots=0), "total_slots"),
    (lambda d: d["nodes"][0].update(role="MEMBER"), "nodes"),
    (lambda d: d["nodes"].append({"address": 3, "role": "MASTER"}), "nodes"),
    (lambda d: d["nodes"][1].update(address=1), "nodes"),
    (lambda d: d.update(latency={"data_rate_kbps": 300}), "latency.data_rate_kbps"),
    (lambda d: d.update(bogus=1), "bogus"),
    (lambda d: d["nodes"][1].update(traffic=-1), "nodes[1].traffic"),
    (lambda d: d.update(replayer={"start_slot": 0}), "replayer"),
    (lambda d: d.update(rng_seed=-5), "rng_seed"),
])
def test_validation_names_field(mutate, field):
    doc = small()
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        config_from_dict(doc)
    assert info.value.field == field


def test_run_is_deterministic():
    cfg = config_from_dict(small())
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.csv_text() == b.csv_text()
    assert a.log_text() == b.log_text()
    assert run_scenario(cfg, seed=12).log_text() != a.log_text()


def test_log_replay_reproduces_metrics():
    res = run_scenario(config_from_dict(small()))
    assert derive_metrics(records_from_text(res.log_text())) == res.metrics


def test_csv_columns_and_sentinel():
    res = run_scenario(config_from_dict(small()))
    rows = list(csv.DictReader(io.StringIO(res.csv_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[0]["jam_defense_pct"] == "NA"
    assert float(rows[0]["pdr_pct"]) > 90


def test_latency_components_add_up():
    m = run_scenario(config_from_dict(small())).metrics
    assert m.mean_latency_ms == pytest.approx(m.t_trans_ms + m.t_prop_ms + m.t_queue_ms
                                              + m.t_proc_ms)
    assert m.t_trans_ms == pytest.approx(128 / 250)


def test_no_traffic_gives_na():
    doc = small()
    doc["nodes"][1]["traffic"] = 0.0
    m = run_scenario(config_from_dict(doc)).metrics
    assert m.packets_sent == 0
    assert m.pdr_percent == "NA" and m.mean_latency_ms == "NA"
    assert "NA" in metrics_csv([m])


def test_fixed_jammer_silences_single_channel():
    doc = with_strategy(small(interference={}), "SINGLE_CHANNEL_AES", fixed_channel=9)
    doc["jammer"] = {"mode": "FIXED", "target_channel": 9}
    m = run_scenario(config_from_dict(doc)).metrics
    assert m.packets_sent > 0 and m.pdr_percent == 0.0


def test_mcsc_beats_single_channel_under_fixed_jammer():
    base = small(interference={}, jammer={"mode": "FIXED", "target_channel": 9})
    rows = compare_strategies([
        config_from_dict(with_strategy(base, "MCSC")),
        config_from_dict(with_strategy(base, "SINGLE_CHANNEL_AES", fixed_channel=9)),
    ])
    assert rows[0].pdr_percent > rows[1].pdr_percent


def test_mcsc_not_worse_than_fhss_under_adaptive_jammer():
    base = small(interference={}, total_slots=6000,
                 jammer={"mode": "ADAPTIVE", "jammed_channels_per_slot": 1, "cycle_slots": 1250})
    rows = compare_strategies([
        config_from_dict(with_strategy(base, "MCSC")),
        config_from_dict(with_strategy(base, "FHSS_BASELINE", fhss_period=10)),
    ])
    assert rows[0].pdr_percent >= rows[1].pdr_percent
    assert rows[1].pdr_percent < 70


def test_compare_rejects_mismatch():
    a = config_from_dict(small())
    b = config_with(a, total_slots=100)
    with pytest.raises(ConfigError):
        compare_strategies([a, b])
    with pytest.raises(ConfigError):
        compare_strategies([a])


def test_replay_attack_mostly_rejected():
    doc = small(total_slots=4000, eavesdropper={"monitored_channels": list(range(125))},
                replayer={"start_slot": 100, "interval_slots": 7})
    m = run_scenario(config_from_dict(doc)).metrics
    assert m.counts["replay_attempts"] > 0
    assert m.defense("replay") == 100.0


def test_accounting_invariants():
    res = run_scenario(config_from_dict(small()))
    member = next(n for n in res.nodes if n.address == 2)
    c = member.counters
    assert c.arrivals == c.sent + c.dropped + len(member.queue)
    assert res.metrics.packets_sent == c.sent


# CLI


def test_cli_run_and_replay(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small()))
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    assert cli.main(["run", "--config", str(cfg), "--seed", "3", "--out", "m.csv",
                     "--log", "e.log"]) == 0
    csv_text = (tmp_path / "out" / "m.csv").read_text()
    assert csv_text.startswith("scenario,strategy,")
    assert cli.main(["replay", "--log", str(tmp_path / "out" / "e.log")]) == 0
    assert capsys.readouterr().out == csv_text


def test_cli_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESET_NAMES)


def test_cli_compare(tmp_path, capsys):
    paths = []
    for strat, extra in (("MCSC", {}), ("SINGLE_CHANNEL_AES", {"fixed_channel": 3})):
        p = tmp_path / f"{strat}.json"
        p.write_text(json.dumps(with_strategy(small(total_slots=500), strat, **extra)))
        paths.append(str(p))
    out_csv = tmp_path / "cmp.csv"
    assert cli.main(["compare", "--configs", *paths, "--out", str(out_csv)]) == 0
    assert len(out_csv.read_text().splitlines()) == 3
    table = capsys.readouterr().out.splitlines()
    assert table[0].split()[0] == "scenario" and len(table) == 3


def test_cli_errors_are_named(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(small(total_slots=0)))
    assert cli.main(["run", "--config", str(bad)]) != 0
    assert "ConfigError: total_slots" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) != 0
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(bad), "--seed", "-1"])


def test_resolve_config_prefers_files(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert resolve_config("low_interference").name == "low_interference"
