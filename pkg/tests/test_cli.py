import json

import pytest

from swarmkit.cli import main

from .scenario import (
    FACTORY,
    SIGMA_ALG1_FIXPOINT,
    SIGMA_WAREHOUSE,
    WAREHOUSE,
)


@pytest.fixture
def files(tmp_path):
    paths = {}

    def write(name, payload):
        p = tmp_path / name
        p.write_text(json.dumps(payload))
        paths[name] = str(p)
        return str(p)

    write("warehouse.json", WAREHOUSE.as_dict())
    write("factory.json", FACTORY.as_dict())
    write("sigma.json", SIGMA_WAREHOUSE.as_dict())
    write("empty.json", {})
    write(
        "swarm.json",
        {
            "protocol": WAREHOUSE.as_dict(),
            "subscription": SIGMA_WAREHOUSE.as_dict(),
            "members": ["T", "T", "FL", "D"],
        },
    )
    paths["dir"] = str(tmp_path)
    return paths


def run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr().out


def test_check_pass_and_fail(files, capsys):
    code, out = run(capsys, ["check", "--protocol", files["warehouse.json"], "--subscription", files["sigma.json"]])
    assert code == 0
    assert json.loads(out)["report"]["passed"] is True
    code, out = run(capsys, ["check", "--protocol", files["warehouse.json"], "--subscription", files["empty.json"]])
    assert code == 1
    assert json.loads(out)["report"]["passed"] is False


def test_compose_stdout_is_deterministic(files, capsys):
    argv = ["compose", files["warehouse.json"], files["factory.json"]]
    code1, out1 = run(capsys, argv)
    code2, out2 = run(capsys, argv)
    assert code1 == code2 == 0
    assert out1 == out2
    assert len(json.loads(out1)["protocol"]["transitions"]) == 8


def test_compose_interface_violation_exit_code(files, tmp_path, capsys):
    g = tmp_path / "g.json"
    h = tmp_path / "h.json"
    g.write_text(json.dumps({"initial": "0", "transitions": [
        {"source": "0", "role": "T", "eventType": "x", "target": "1"}]}))
    h.write_text(json.dumps({"initial": "0", "transitions": [
        {"source": "0", "role": "A", "eventType": "x", "target": "1"}]}))
    code, out = run(capsys, ["compose", str(g), str(h)])
    assert code == 1
    assert json.loads(out)["violations"]


def test_compose_roles_override(files, tmp_path, capsys):
    zero = tmp_path / "zero.json"
    zero.write_text(json.dumps({"initial": "z", "transitions": []}))
    code, out = run(capsys, ["compose", files["warehouse.json"], str(zero), "--roles", "T"])
    assert code == 0
    assert [t["eventType"] for t in json.loads(out)["protocol"]["transitions"]] == ["closingTime"]


def test_subscribe_modes(files, capsys):
    code, out = run(capsys, ["subscribe", "--mode", "alg1", files["warehouse.json"], files["factory.json"]])
    assert code == 0
    body = json.loads(out)
    assert body["subscription"] == SIGMA_ALG1_FIXPOINT.as_dict()
    assert body["stats"]["eFrac"] == pytest.approx(0.75)
    code, out = run(capsys, ["subscribe", "--mode", "exact", files["warehouse.json"], files["factory.json"]])
    assert code == 0
    assert json.loads(out)["stats"]["compositionTransitions"] == 8


def test_project_and_adapt(files, tmp_path, capsys):
    machine_path = str(tmp_path / "fl.json")
    code, out = run(capsys, [
        "project", "--protocol", files["warehouse.json"], "--role", "FL",
        "--subscription", files["sigma.json"], "--out", machine_path,
    ])
    assert code == 0
    machine = json.loads((tmp_path / "fl.json").read_text())["machine"]
    assert machine["role"] == "FL"
    payload = tmp_path / "machine.json"
    payload.write_text(json.dumps(machine))
    code, out = run(capsys, [
        "adapt", files["warehouse.json"], files["factory.json"],
        "--machine", str(payload), "--role", "FL", "--index", "0",
    ])
    assert code == 0
    adapted = json.loads(out)["machine"]
    states = {t["source"] for t in adapted["accepts"]} | {t["target"] for t in adapted["accepts"]}
    assert len(states) == 5


def test_simulate_then_fidelity(files, tmp_path, capsys):
    trace_path = str(tmp_path / "trace.json")
    code, out = run(capsys, [
        "simulate", "--swarm", files["swarm.json"], "--steps", "40", "--seed", "7",
        "--out", trace_path,
    ])
    assert code == 0
    trace = json.loads((tmp_path / "trace.json").read_text())["trace"]
    payload = tmp_path / "replayable.json"
    payload.write_text(json.dumps(trace))
    code, out = run(capsys, ["fidelity", "--trace", str(payload), "--each-step"])
    assert code == 0
    assert json.loads(out)["passed"] is True


def test_bench_writes_csv(files, tmp_path, capsys):
    csv_path = tmp_path / "results.csv"
    code, out = run(capsys, ["bench", "--n", "2", "--seed", "3", "--repetitions", "1", "--out", str(csv_path)])
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "instance,transitions,alg1_us,exact_us,alg1_efrac,exact_efrac"
    assert len(lines) == 3
    assert "records" in json.loads(out)


def test_unreadable_file_is_usage_error(capsys):
    code = main(["check", "--protocol", "/does/not/exist.json", "--subscription", "/none.json"])
    assert code == 2


def test_unknown_flag_rejected(files):
    with pytest.raises(SystemExit):
        main(["compose", files["warehouse.json"], "--nonsense"])


def test_server_mode_round_trips(files, capsys):
    import threading
    import time

    import uvicorn

    from swarmkit.service import create_app

    config = uvicorn.Config(create_app(), host="127.0.0.1", port=8134, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        assert server.started
        url = "http://127.0.0.1:8134"
        code, remote = run(capsys, ["--server", url, "compose", files["warehouse.json"], files["factory.json"]])
        assert code == 0
        code, local = run(capsys, ["compose", files["warehouse.json"], files["factory.json"]])
        assert json.loads(remote) == json.loads(local)
        code, out = run(capsys, [
            "--server", url, "check",
            "--protocol", files["warehouse.json"], "--subscription", files["empty.json"],
        ])
        assert code == 1
    finally:
        server.should_exit = True
        thread.join(timeout=5)
