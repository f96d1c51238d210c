import json

import pytest

from mtreecode.cli import main
from mtreecode.codec import read_jsonl, write_jsonl
from mtreecode.dataset import answers_match
from mtreecode.synthetic import write_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "syn.jsonl"
    write_corpus(path, 200, seed=2)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_canonicalize_equivalent_expressions(capsys):
    code, a, _ = run(capsys, "canonicalize", "2*3+4+5")
    _, b, _ = run(capsys, "canonicalize", "5+3*2+4")
    assert code == 0 and a == b
    assert a.splitlines() == ["(+ 4 5 (× 2 3))", "15.0"]


def test_canonicalize_single_literal(capsys):
    code, out, _ = run(capsys, "canonicalize", "7", "--json")
    assert code == 0 and json.loads(out) == {"mtree": "(+ 7)", "value": 7.0}


@pytest.mark.parametrize("expr,error", [("1/(2-2)", "DivisionByZero"), ("2*(", "ExprSyntaxError"), ("2^13", "UnsupportedExponent")])
def test_canonicalize_errors_exit_2(capsys, expr, error):
    code, out, err = run(capsys, "canonicalize", expr)
    assert code == 2 and out == ""
    assert json.loads(err.strip().splitlines()[-1])["error"] == error


def test_unknown_flag_is_an_error(capsys):
    code, _, _ = run(capsys, "canonicalize", "7", "--bogus")
    assert code == 2


def test_encode_decode_roundtrip(capsys, corpus, tmp_path):
    codes = tmp_path / "codes.jsonl"
    answers = tmp_path / "answers.jsonl"
    assert run(capsys, "encode", "-i", corpus, "-o", codes, "--save-vocab", tmp_path / "v.json")[0] == 0
    assert run(capsys, "decode", "-i", codes, "-o", answers, "--strict")[0] == 0
    gold = {r["id"]: r["ans"] for r in read_jsonl(corpus)}
    out = read_jsonl(answers)
    assert len(out) == len(gold)
    assert all(answers_match(r["answer"], gold[r["id"]]) for r in out)

    # vectors alone decode the same way
    recs = read_jsonl(codes)
    for r in recs:
        r.pop("codes")
    write_jsonl(recs, tmp_path / "vec.jsonl")
    assert run(capsys, "decode", "-i", tmp_path / "vec.jsonl", "--vocab", tmp_path / "v.json",
               "-o", tmp_path / "a2.jsonl")[0] == 0
    assert read_jsonl(tmp_path / "a2.jsonl") == out


def test_encode_is_byte_identical(capsys, corpus, tmp_path):
    run(capsys, "encode", "-i", corpus, "-o", tmp_path / "a.jsonl")
    run(capsys, "encode", "-i", corpus, "-o", tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_encode_negative_root_leaf(capsys, tmp_path):
    src = tmp_path / "one.jsonl"
    write_jsonl([{"id": "a", "text": "2 cakes cost 1 each , 3 more , then 8 off",
                  "equation": "x=1/(3+1)*2-8", "ans": -7.5}], src)
    assert run(capsys, "encode", "-i", src, "-o", tmp_path / "c.jsonl")[0] == 0
    (rec,) = read_jsonl(tmp_path / "c.jsonl")
    assert ["1_0_+"] in rec["codes"]


def test_decode_none_only_is_empty_tree(capsys, tmp_path):
    src = tmp_path / "none.jsonl"
    write_jsonl([{"id": "z", "values": ["1", "pi"], "codes": [["None"], ["None"]]}], src)
    code, out, _ = run(capsys, "decode", "-i", src)
    assert code == 0 and json.loads(out)["error"] == "EmptyTree"
    assert run(capsys, "decode", "-i", src, "--strict")[0] == 1


def test_stats_on_synthetic(capsys, corpus):
    code, out, _ = run(capsys, "stats", "-i", corpus, "--manifest-sizes", "50", "100")
    stats = json.loads(out)
    assert code == 0
    assert stats["coverage_pct"] == 100.0
    assert {"vocab_size", "coverage_pct", "dropped", "operand_histogram"} <= set(stats)
    assert len(stats["subsample_manifest"]["50"]) == 50


def test_preprocess_outputs(capsys, corpus, tmp_path):
    code, _, _ = run(capsys, "preprocess", "-i", corpus, "-o", tmp_path / "s.jsonl",
                     "--vocab", tmp_path / "v.json", "--stats", tmp_path / "st.json")
    assert code == 0
    vocab = json.loads((tmp_path / "v.json").read_text())
    assert vocab[0] == "None"
    recs = read_jsonl(tmp_path / "s.jsonl")
    assert all(r["vector_dim"] == len(vocab) for r in recs)


def test_missing_input_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "stats", "-i", tmp_path / "missing.jsonl")
    assert code == 2 and "FileNotFoundError" in err


def test_train_twice_identical_logs_then_predict(capsys, corpus, tmp_path):
    args = ["--embed-dim", 8, "--hidden", 8, "--ffn", 16, 16, "--epochs", 2, "--seed", 7, "--no-timing"]
    for name in ("a", "b"):
        code, _, _ = run(capsys, "train", "-i", corpus, "-o", tmp_path / f"{name}.npz",
                         "--log", tmp_path / f"{name}.jsonl", *args)
        assert code == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    code, _, err = run(capsys, "predict", "-i", corpus, "--checkpoint", tmp_path / "a.npz",
                       "-o", tmp_path / "p.jsonl")
    assert code == 0 and "answer_accuracy" in err
    assert len(read_jsonl(tmp_path / "p.jsonl")) == 200


def test_config_file_with_flag_override(capsys, corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"embed_dim": 4, "hidden": 4, "ffn": [4, 4], "epochs": 3, "no_timing": True}))
    code, out, _ = run(capsys, "train", "--config", cfg, "-i", corpus, "-o", tmp_path / "m.npz",
                       "--log", tmp_path / "log.jsonl", "--epochs", 1)
    assert code == 0
    assert len(read_jsonl(tmp_path / "log.jsonl")) == 1
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(capsys, "train", "--config", cfg, "-i", corpus, "-o", tmp_path / "m.npz")[0] == 2


def test_resolved_config_is_logged(capsys):
    code, _, err = run(capsys, "canonicalize", "7")
    assert code == 0 and '"expression": "7"' in err
    code, _, err = run(capsys, "-q", "canonicalize", "7")
    assert code == 0 and err == ""
