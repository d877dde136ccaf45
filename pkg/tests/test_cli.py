import csv
import json
import subprocess
import sys
from datetime import date, timedelta

import pytest

from attackwatch.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, main, read_store, streamgraph_rows
from attackwatch.config import PipelineConfig, from_dict, load_config
from attackwatch.corpus import DepTree
from attackwatch.depkernel import TreeKernel
from attackwatch.dqe import DqeConfig, run_dqe, seed_queries
from attackwatch.synthetic import burst_corpus, fixture_embeddings, gsr_csv, planted_corpus

START = date(2015, 7, 20)


def run(*argv):
    return main([str(a) for a in argv])


def jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def stage(tmp, corpus, name="in"):
    texts, parses = corpus.write(tmp / name)
    emb = tmp / name / "vectors.txt"
    emb.write_text(fixture_embeddings(corpus).dump())
    return texts, parses, emb


def pipeline(tmp, corpus, out="out", jobs=1):
    texts, parses, emb = stage(tmp, corpus)
    o = tmp / out
    assert run("ingest", "--texts", texts, "--parses", parses, "--output-dir", o) == EXIT_OK
    assert run("detect", "--embeddings", emb, "--output-dir", o, "--jobs", jobs) == EXIT_OK
    return o


@pytest.fixture(scope="module")
def two_burst(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("burst")
    corpus = burst_corpus()
    out = pipeline(tmp, corpus)
    return tmp, corpus, out


class TestIngest:
    def test_three_days(self, tmp_path):
        corpus = burst_corpus(days=3, per_day=20, bursts=())
        texts, parses, _ = stage(tmp_path, corpus)
        assert run("ingest", "--texts", texts, "--parses", parses, "--output-dir", tmp_path / "o") == EXIT_OK
        slots = read_store(tmp_path / "o" / "store")
        assert [s.day for s in slots] == [START + timedelta(i) for i in range(3)]
        assert [s.doc_count for s in slots] == [20, 20, 20]
        assert len(list((tmp_path / "o" / "store" / "days").glob("*.jsonl"))) == 3
        report = json.loads((tmp_path / "o" / "ingest_report.json").read_text())
        assert report["documents"] == 60 and report["unparsed"] == 0

    def test_empty_inputs(self, tmp_path, capfd):
        (tmp_path / "t.jsonl").write_text("")
        (tmp_path / "p.conllu").write_text("")
        rc = run("ingest", "--texts", tmp_path / "t.jsonl", "--parses", tmp_path / "p.conllu",
                 "--output-dir", tmp_path / "o")
        assert rc == EXIT_OK
        assert read_store(tmp_path / "o" / "store") == []
        assert "empty store" in capfd.readouterr().err

    def test_corrupt_conllu(self, tmp_path):
        corpus = burst_corpus(days=3, per_day=20, bursts=())
        texts, parses, _ = stage(tmp_path, corpus)
        lines = parses.read_text().splitlines()
        # point the first token of the first sentence at a head that does not exist
        i = next(k for k, line in enumerate(lines) if line.startswith("1\t"))
        cols = lines[i].split("\t")
        cols[6] = "99"
        lines[i] = "\t".join(cols)
        parses.write_text("\n".join(lines) + "\n")
        assert run("ingest", "--texts", texts, "--parses", parses, "--output-dir", tmp_path / "o") == EXIT_OK
        rejects = jsonl(tmp_path / "o" / "store" / "rejects.jsonl")
        assert len(rejects) == 1 and rejects[0]["source"] == "parses"
        assert sum(s.doc_count for s in read_store(tmp_path / "o" / "store")) == 60

    def test_missing_input(self, tmp_path):
        assert run("ingest", "--texts", tmp_path / "nope.jsonl", "--output-dir", tmp_path) == EXIT_INPUT

    def test_reingest_drops_stale_days(self, tmp_path):
        o = tmp_path / "o"
        big = burst_corpus(days=3, per_day=5, bursts=())
        t, p, _ = stage(tmp_path, big, "a")
        run("ingest", "--texts", t, "--parses", p, "--output-dir", o)
        small = burst_corpus(days=1, per_day=5, bursts=())
        t, p, _ = stage(tmp_path, small, "b")
        run("ingest", "--texts", t, "--parses", p, "--output-dir", o)
        assert len(list((o / "store" / "days").glob("*.jsonl"))) == 1


class TestDetect:
    def test_planted_day(self, tmp_path):
        corpus = planted_corpus(n_docs=2000, planted_frac=0.03)
        out = pipeline(tmp_path, corpus)
        acc = [e for e in jsonl(out / "events.jsonl") if e["status"] == "accepted"]
        assert any(e["type"] == "dataBreach" and e["date"] == "2015-07-20" for e in acc)

    def test_signal_free(self, tmp_path):
        out = pipeline(tmp_path, burst_corpus(days=3, per_day=100, bursts=()))
        assert [e for e in jsonl(out / "events.jsonl") if e["status"] == "accepted"] == []
        assert (out / "trace.jsonl").is_file() and (out / "wordclouds.csv").is_file()

    def test_two_bursts(self, two_burst):
        _, _, out = two_burst
        acc = [e for e in jsonl(out / "events.jsonl") if e["status"] == "accepted"]
        assert [(e["date"], e["type"]) for e in acc] == [("2015-07-20", "dataBreach"), ("2015-08-20", "dataBreach")]
        assert all({"ashley", "madison"} <= set(e["exemplar_lemmas"]) for e in acc)

    def test_missing_embeddings(self, two_burst, tmp_path):
        _, _, out = two_burst
        rc = run("detect", "--embeddings", tmp_path / "none.txt", "--store", out / "store",
                 "--output-dir", tmp_path)
        assert rc == EXIT_INPUT

    def test_no_store(self, tmp_path, two_burst):
        tmp, _, _ = two_burst
        assert run("detect", "--embeddings", tmp / "in" / "vectors.txt", "--output-dir", tmp_path) == EXIT_INPUT

    def test_jobs_match_serial(self, two_burst, tmp_path):
        tmp, _, out = two_burst
        o = tmp_path / "par"
        rc = run("detect", "--embeddings", tmp / "in" / "vectors.txt", "--store", out / "store",
                 "--output-dir", o, "--jobs", 3)
        assert rc == EXIT_OK
        for name in ("events.jsonl", "trace.jsonl", "queries.tsv", "wordclouds.csv"):
            assert (o / name).read_bytes() == (out / name).read_bytes()

    def test_single_category(self, two_burst, tmp_path):
        tmp, _, out = two_burst
        rc = run("detect", "--embeddings", tmp / "in" / "vectors.txt", "--store", out / "store",
                 "--output-dir", tmp_path, "--seed-category", "ddos")
        assert rc == EXIT_OK
        cats = {r["category"] for r in jsonl(tmp_path / "trace.jsonl")}
        assert cats == {"ddos"}

    def test_bad_category(self, tmp_path):
        assert run("detect", "--seed-category", "phishing", "--output-dir", tmp_path) == EXIT_INPUT


class TestBaseline:
    def test_empty_keywords(self, tmp_path, two_burst):
        _, _, out = two_burst
        (tmp_path / "kw.txt").write_text("# nothing here\n\n")
        rc = run("baseline", "--keywords", tmp_path / "kw.txt", "--store", out / "store", "--output-dir", tmp_path)
        assert rc == EXIT_INPUT

    def test_from_counts(self, tmp_path):
        rows = ["day,keyword,count,total"]
        for t in range(30):
            day = (START + timedelta(t)).isoformat()
            for k in range(3):
                rows.append(f"{day},kw{k},{40 if t in (10, 11) else 2},100")
        (tmp_path / "c.csv").write_text("\n".join(rows) + "\n")
        (tmp_path / "kw.txt").write_text("kw0\nkw1\nkw2\n")
        (tmp_path / "b.toml").write_text("[burst]\nTb = 3\n")
        rc = run("baseline", "--config", tmp_path / "b.toml", "--keywords", tmp_path / "kw.txt",
                 "--counts", tmp_path / "c.csv", "--output-dir", tmp_path)
        assert rc == EXIT_OK
        ev = jsonl(tmp_path / "baseline_events.jsonl")
        assert [e["event_id"] for e in ev] == ["2015-07-30-B001", "2015-07-31-B001"]
        assert ev[0]["type"] is None and ev[0]["keywords"] == ["kw0", "kw1", "kw2"]

    def test_store_default_threshold(self, two_burst, tmp_path):
        _, _, out = two_burst
        assert run("baseline", "--store", out / "store", "--output-dir", tmp_path) == EXIT_OK
        # only a handful of packaged keywords occur in the fixture, far fewer than Tb
        assert jsonl(tmp_path / "baseline_events.jsonl") == []


class TestEvaluate:
    def gsr_file(self, tmp_path):
        # 220 unrelated background incidents plus the ones the fixture should hit
        rows = gsr_csv().splitlines()
        rows += ["G9001,2015-07-20,dataBreach,Ashley Madison,dating site breach,PrivacyRights",
                 "G9002,2015-08-21,dataBreach,Ashley Madison,more files dumped,PrivacyRights",
                 "G9003,2015-07-25,ddos,Somebank Inc,service offline,Hackmageddon"]
        path = tmp_path / "gsr.csv"
        path.write_text("\n".join(rows) + "\n")
        return path

    def test_two_burst_metrics(self, two_burst, tmp_path):
        _, _, out = two_burst
        o = tmp_path / "e"
        rc = run("evaluate", "--events", out / "events.jsonl", "--gsr", self.gsr_file(tmp_path), "--output-dir", o)
        assert rc == EXIT_OK
        m = json.loads((o / "metrics.json").read_text())
        db = m["scores"]["dataBreach"]
        assert (db["tp"], db["fp"], db["matchedGsr"], db["gsrTotal"]) == (2, 0, 2, 87)
        assert m["scores"]["ddos"]["recall"] == 0.0
        assert (o / "metrics.txt").read_text().startswith("type")

    def test_window_zero_loses_late_match(self, two_burst, tmp_path):
        _, _, out = two_burst
        rc = run("evaluate", "--events", out / "events.jsonl", "--gsr", self.gsr_file(tmp_path),
                 "--window", 0, "--output-dir", tmp_path)
        assert rc == EXIT_OK
        stages = {r["eventId"]: r["stage"] for r in json.loads((tmp_path / "metrics.json").read_text())["matches"]}
        assert sorted(stages.values()) == ["dateFail", "matched"]

    def test_schema_mismatch(self, tmp_path, two_burst):
        _, _, out = two_burst
        (tmp_path / "bad.csv").write_text("id,when\n1,2015-01-01\n")
        assert run("evaluate", "--events", out / "events.jsonl", "--gsr", tmp_path / "bad.csv",
                   "--output-dir", tmp_path) == EXIT_INPUT
        (tmp_path / "ev.jsonl").write_text('{"event_id": "x"}\n')
        assert run("evaluate", "--events", tmp_path / "ev.jsonl", "--gsr", self.gsr_file(tmp_path),
                   "--output-dir", tmp_path) == EXIT_INPUT

    def test_manual_labels(self, tmp_path):
        ev = {"event_id": "2015-01-01-001", "date": "2015-01-01", "type": "ddos", "status": "accepted",
              "exemplar_lemmas": ["unknown", "target"]}
        (tmp_path / "ev.jsonl").write_text(json.dumps(ev) + "\n")
        (tmp_path / "m.csv").write_text("eventId,label,note\n2015-01-01-001,TP,verified by hand\n")
        rc = run("evaluate", "--events", tmp_path / "ev.jsonl", "--gsr", self.gsr_file(tmp_path),
                 "--manual", tmp_path / "m.csv", "--output-dir", tmp_path)
        assert rc == EXIT_OK
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["scores"]["ddos"]["tp"] == 1 and m["matches"][0]["stage"] == "entityFail"


class TestPlotdata:
    def test_empty(self, tmp_path):
        (tmp_path / "ev.jsonl").write_text("")
        (tmp_path / "tr.jsonl").write_text("")
        rc = run("plotdata", "--events", tmp_path / "ev.jsonl", "--trace", tmp_path / "tr.jsonl",
                 "--output-dir", tmp_path)
        assert rc == EXIT_OK
        assert read_csv(tmp_path / "streamgraph.csv") == [["day", "type", "documents", "normalized"]]
        assert list((tmp_path / "wordclouds").iterdir()) == []

    def test_single_type_max_one(self, two_burst):
        _, _, out = two_burst
        assert run("plotdata", "--output-dir", out) == EXIT_OK
        rows = read_csv(out / "streamgraph.csv")[1:]
        assert {r[1] for r in rows} == {"dataBreach"}
        assert max(float(r[3]) for r in rows) == 1.0
        clouds = sorted(p.name for p in (out / "wordclouds").iterdir())
        assert clouds == ["2015-07-20-001.csv", "2015-08-20-001.csv"]

    def test_volume_recount(self, two_burst):
        """Per-day volumes equal a brute-force kernel scan over every sentence of the day."""
        _, corpus, out = two_burst
        table = fixture_embeddings(corpus)
        cfg = DqeConfig()
        kern = TreeKernel(cfg.kernel, table)
        events = [e for e in jsonl(out / "events.jsonl") if e["status"] == "accepted"]
        got = {(d, t): int(n) for d, t, n, _ in streamgraph_rows(events, jsonl(out / "trace.jsonl"))}
        slots = {s.day.isoformat(): s for s in read_store(out / "store")}
        for e in events:
            slot = slots[e["date"]]
            final, _, _ = run_dqe(seed_queries(e["source"]), slot, cfg, table)
            trees = {q.surface: q.tree for q in final}
            qs = [trees[q["surface"]] for q in e["queries"]]
            hits = {doc.doc_id for doc in slot.documents for d in doc.trees
                    if any(kern(q, d).normalized is not None and kern(q, d).normalized >= cfg.tau_match
                           for q in qs)}
            assert hits and got[(e["date"], e["type"])] == len(hits)
            assert hits <= corpus.planted[e["date"]]


class TestGlobal:
    @pytest.mark.parametrize("argv", [["frobnicate"], ["ingest", "--bogus"], ["detect", "--jobs", "many"], []])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == EXIT_USAGE

    def test_process_exit_codes(self, tmp_path):
        cmd = [sys.executable, "-m", "attackwatch.cli"]
        assert subprocess.run(cmd + ["nope"], capture_output=True).returncode == EXIT_USAGE
        res = subprocess.run(cmd + ["ingest", "--texts", str(tmp_path / "x")], capture_output=True, text=True)
        assert res.returncode == EXIT_INPUT and "not found" in res.stderr.lower()

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0 and "attackwatch" in capsys.readouterr().out

    def test_flags_before_or_after(self, tmp_path):
        corpus = burst_corpus(days=1, per_day=5, bursts=())
        t, p, _ = stage(tmp_path, corpus)
        assert main(["--output-dir", str(tmp_path / "a"), "ingest", "--texts", str(t)]) == EXIT_OK
        assert main(["ingest", "--texts", str(t), "--output-dir", str(tmp_path / "b")]) == EXIT_OK
        assert (tmp_path / "a" / "store" / "manifest.json").read_bytes() == \
            (tmp_path / "b" / "store" / "manifest.json").read_bytes()

    def test_missing_config(self, tmp_path):
        assert run("ingest", "--config", tmp_path / "none.toml") == EXIT_INPUT

    def test_bad_jobs(self, tmp_path):
        assert run("detect", "--jobs", 0, "--output-dir", tmp_path) == EXIT_INPUT


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg == PipelineConfig() and cfg.dqe.tau_match == 0.35 and cfg.burst.Tb == 36

    def test_sections(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('jobs = 2\n[paths]\ncorpus = "data/t.jsonl"\n[dqe]\ntau_match = 0.2\n'
                        '[kernel]\nlam = 0.5\n[semeq]\nthreshold = 0.8\n[eval]\nwindow = 2\n')
        cfg = load_config(path)
        assert cfg.jobs == 2 and cfg.dqe.tau_match == 0.2 and cfg.eval.window == 2
        assert cfg.dqe.kernel.lam == 0.5 and cfg.dqe.kernel.sem_eq.threshold == 0.8
        assert cfg.paths.corpus == tmp_path / "data" / "t.jsonl"
        assert json.dumps(cfg.to_json())

    @pytest.mark.parametrize("data", [{"dqe": {"nonsense": 1}}, {"extra": {}}, {"eval": {"window": -1}},
                                      {"dqe": {"tau_match": 2.0}}])
    def test_rejects(self, data):
        with pytest.raises(ValueError):
            from_dict(data)

    def test_bad_toml_exit(self, tmp_path):
        (tmp_path / "c.toml").write_text("[dqe\n")
        assert run("ingest", "--config", tmp_path / "c.toml") == EXIT_INPUT
