import json
import subprocess
import sys

import pytest

from biosketch.cli import EXIT_DATA, EXIT_DENY, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from biosketch.features import BitChannelModel, synth_population, write_features
from biosketch.pipeline import TemplateStore


@pytest.fixture
def features(tmp_path):
    pop = synth_population(4, 1024, BitChannelModel.uniform(1024, 0.0, 0.5), seed=0, samples_per_subject=2)
    path = tmp_path / "f.jsonl"
    write_features(path, list(pop.iter_samples()))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def enroll_args(tmp_path, features, subject="s0"):
    return ["enroll", "--store", tmp_path / "st.json", "--features", features, "--subject", subject, "--N", 96, "--K", 13]


def test_enroll_then_auth_grants(tmp_path, features, capsys):
    code, out, _ = run(enroll_args(tmp_path, features) + ["--key-out", tmp_path / "k.txt"], capsys)
    assert code == EXIT_OK
    assert out.startswith("# biosketch-key J=1024 G=768")
    assert out == (tmp_path / "k.txt").read_text()
    code, out, _ = run(
        ["auth", "--store", tmp_path / "st.json", "--features", features, "--subject", "s0", "--key", tmp_path / "k.txt"],
        capsys,
    )
    assert (code, out.strip()) == (EXIT_OK, "GRANT (match)")


def test_store_holds_no_key_or_feature(tmp_path, features, capsys):
    _, key_text, _ = run(enroll_args(tmp_path, features), capsys)
    store_text = (tmp_path / "st.json").read_text()
    assert "biosketch-key" not in store_text
    assert "\n".join(key_text.splitlines()[1:4]) not in store_text
    assert features.read_text().splitlines()[0][40:90] not in store_text
    assert not (tmp_path / "k.txt").exists()


def test_truncated_key_is_parse_error_without_mutation(tmp_path, features, capsys):
    _, key_text, _ = run(enroll_args(tmp_path, features), capsys)
    (tmp_path / "k.txt").write_text("\n".join(key_text.splitlines()[:100]) + "\n")
    before = (tmp_path / "st.json").read_bytes()
    code, _, err = run(
        ["auth", "--store", tmp_path / "st.json", "--features", features, "--subject", "s0", "--key", tmp_path / "k.txt"],
        capsys,
    )
    assert code == EXIT_DATA and "indices" in err
    assert (tmp_path / "st.json").read_bytes() == before


def test_auth_against_empty_store_denies_unknown_subject(tmp_path, features, capsys):
    from biosketch.rs import RsCodeParams

    TemplateStore(RsCodeParams(96, 13)).save(tmp_path / "empty.json")
    from biosketch.pipeline import issue_key

    (tmp_path / "k.txt").write_text(issue_key(1024, 768, seed=0).to_text())
    code, out, _ = run(
        ["auth", "--store", tmp_path / "empty.json", "--features", features, "--subject", "s0", "--key", tmp_path / "k.txt"],
        capsys,
    )
    assert (code, out.strip()) == (EXIT_DENY, "DENY (unknown subject)")


def test_revoke_cycle_and_unknown_subject(tmp_path, features, capsys):
    run(enroll_args(tmp_path, features) + ["--key-out", tmp_path / "old.txt"], capsys)
    base = ["--store", tmp_path / "st.json", "--features", features, "--subject", "s0"]
    code, _, _ = run(["revoke", *base, "--seed", 9, "--key-out", tmp_path / "new.txt"], capsys)
    assert code == EXIT_OK
    assert run(["auth", *base, "--key", tmp_path / "old.txt"], capsys)[0] == EXIT_DENY
    assert run(["auth", *base, "--key", tmp_path / "new.txt"], capsys)[0] == EXIT_OK
    code, out, _ = run(["revoke", "--store", tmp_path / "st.json", "--features", features, "--subject", "s3"], capsys)
    assert code == EXIT_DENY and "unknown subject" in out


def test_strict_enrollment_exhaustion_exit_code(tmp_path, capsys):
    pop = synth_population(2, 1024, seed=0, samples_per_subject=1)
    path = tmp_path / "f.jsonl"
    write_features(path, list(pop.iter_samples()))
    code, _, err = run(enroll_args(tmp_path, path) + ["--on-failure", "strict"], capsys)
    assert code == EXIT_INTERNAL and "16 keys" in err


def test_bad_feature_file_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,0,1,0.7\n")
    code, _, err = run(enroll_args(tmp_path, bad), capsys)
    assert code == EXIT_DATA and "line 1" in err


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["auth"]) == EXIT_USAGE
    capsys.readouterr()


def write_config(path, body):
    path.write_text(body)
    return path


SMALL = """
[experiment]
name = "small"
seed = 4
out = "res"

[code]
N = [32, 96]
K = [7, 10, 13]

[population]
subjects = 6
samples = 4
"""


def test_eval_writes_reports_and_is_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.toml", SMALL)
    assert main(["--config", str(cfg), "eval"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "gar_n768_k104" in out
    first = {p.name: p.read_bytes() for p in (tmp_path / "res").iterdir()}
    assert set(first) == {f"{n}.csv" for n in ("distributions", "eer", "roc", "gs", "privacy", "unlink", "retrieval")} | {
        "report.json"
    }
    assert first["gs.csv"].startswith(b"# experiment: small\n")
    report = json.loads(first["report.json"])
    assert set(report) >= {"experiment", "params", "seed", "metrics"}
    assert report["security_bits"] == [56, 80, 104]
    assert main(["eval", "--config", str(cfg), "--jobs", "2"]) == EXIT_OK
    again = {p.name: p.read_bytes() for p in (tmp_path / "res").iterdir()}
    assert again == first


def test_flags_override_config(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.toml", SMALL.replace('["distributions"', ""))
    assert main(["eval", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "other")]) == EXIT_OK
    capsys.readouterr()
    assert json.loads((tmp_path / "other" / "report.json").read_text())["seed"] == 9


def test_eval_rejects_g_not_8n_before_work(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.toml", '[experiment]\nout = "res"\n[code]\nN = 96\nK = [7]\nG = 512\n')
    assert main(["eval", "--config", str(cfg)]) == EXIT_USAGE
    assert "G=512" in capsys.readouterr().err
    assert not (tmp_path / "res").exists()


def test_eval_partial_failure_continues(tmp_path, capsys):
    # one subject with a single sample: ingestion works, gs needs two per subject and fails
    pop = synth_population(3, 256, seed=0, samples_per_subject=2)
    vecs = list(pop.iter_samples())[:-1]
    write_features(tmp_path / "one.jsonl", vecs)
    cfg = write_config(
        tmp_path / "exp.toml",
        '[experiment]\nout = "res"\nanalyses = ["privacy", "gs"]\n[code]\nN = 16\nK = [4]\n'
        '[population]\nfeatures = "one.jsonl"\n',
    )
    code = main(["eval", "--config", str(cfg)])
    out = capsys.readouterr().out
    assert code == EXIT_INTERNAL
    report = json.loads((tmp_path / "res" / "report.json").read_text())
    assert "privacy" in report["metrics"] and "gs" in report["errors"]
    assert "FAILED" in out


def test_train_toy_then_eval_chain(tmp_path, capsys):
    assert main(["train-toy", "--out", str(tmp_path / "toy"), "--seed", "0"]) == EXIT_OK
    assert (tmp_path / "toy" / "history.csv").exists()
    cfg = write_config(
        tmp_path / "chain.toml",
        '[experiment]\nout = "res"\nanalyses = ["gs", "retrieval"]\n[code]\nN = 4\nK = [1, 2]\n'
        '[population]\nfeatures = "toy/codes.jsonl"\n',
    )
    assert main(["eval", "--config", str(cfg)]) == EXIT_OK
    rows = (tmp_path / "res" / "gs.csv").read_text().splitlines()
    assert rows[1] == "n_bits,k_bits,gar,far,decoded_rate" and len(rows) == 4


def test_train_toy_grid_search_prints_selection(tmp_path, capsys):
    cfg = write_config(tmp_path / "toy.toml", "[toy]\nper_class = 8\ngrid_candidates = [1, 2]\ngrid_iterations = 3\n")
    code = main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "toy"), "--grid-search"])
    assert code == EXIT_OK
    assert "selected alpha=" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "biosketch", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "train-toy" in proc.stdout
