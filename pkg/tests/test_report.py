import csv
import json
import shutil
from collections import Counter

import pytest

from phenokg.pipeline import Run
from phenokg.report import nps_histogram, write_report

from conftest import golden_config


@pytest.fixture
def report_run(golden_dir, tmp_path):
    out = tmp_path / "run"
    shutil.copytree(golden_dir, out)
    return Run(golden_config(out), out)


def rows(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def test_front_table_has_one_row_per_front_claim(report_run):
    write_report(report_run)
    front = report_run.read_json("expand", "pareto.json")["front"]
    table = rows(report_run.out / "report" / "pareto_front.csv")
    assert len(table) == len(front)
    assert {r["claim_id"] for r in table} == {d["claim"]["claim_id"] for d in front}


def test_histograms_count_every_candidate(report_run):
    write_report(report_run)
    hyps = {h.id: h.cluster_id for h in report_run.hypotheses()}
    per_cluster = Counter(hyps[b.hypothesis_id] for b in report_run.nps())
    totals = Counter()
    for r in rows(report_run.out / "report" / "nps_histogram.csv"):
        totals[int(r["cluster"])] += int(r["count"])
    assert totals == per_cluster


def test_empty_claim_set_still_reports(report_run):
    p = report_run.path("expand", "pareto.json")
    data = json.loads(p.read_text())
    data["front"] = []
    p.write_text(json.dumps(data))
    paths = write_report(report_run)
    assert all(x.exists() for x in paths)
    assert rows(report_run.out / "report" / "pareto_front.csv") == []


def test_cluster_summary_sizes(report_run):
    write_report(report_run)
    table = rows(report_run.out / "report" / "cluster_summary.csv")
    assert sum(int(r["size"]) for r in table) == 1000


def test_histogram_edges():
    assert list(nps_histogram([0.0, 0.05, 0.1, 1.0])) == [2, 1, 0, 0, 0, 0, 0, 0, 0, 1]
