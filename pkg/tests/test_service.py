"""HTTP service contract tests (in-process via the ASGI test client)."""

import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from creepformer import data as dp
from creepformer.checkpoint import save_checkpoint
from creepformer.model import TataConfig, TataModel, count_params
from creepformer.service import create_app

TOY = dict(d_model=8, n_layers=1, n_heads=2, hidden_dim=8, d_intermediate=4, dropout=0.0)


@pytest.fixture(scope="module")
def ckpt_path(tmp_path_factory):
    model = TataModel(TataConfig(**TOY), seed=6)
    stats = dp.NormStats(np.array([2400.0, 470.0, 3.2e5]), np.array([80.0, 120.0, 4e4]))
    background = np.abs(np.random.default_rng(0).normal(size=(6, 3))) * [100, 50, 1e4] \
        + [2300, 400, 2.8e5]
    path = tmp_path_factory.mktemp("svc") / "model.ckpt"
    save_checkpoint(path, model, stats, background=background, meta={"source": "test"})
    return path


@pytest.fixture(scope="module")
def client(ckpt_path):
    return TestClient(create_app(ckpt_path))


GOOD = {
    "density_kg_m3": 2400.0,
    "fc_ksc": 470.0,
    "e_ksc": 3.2e5,
    "initial_creep_microstrain": 20.0,
    "days": 10,
}


class TestHealthAndModel:
    def test_healthz(self, client):
        res = client.get("/healthz")
        assert res.status_code == 200
        assert res.json() == {"status": "ok"}

    def test_healthz_503_before_load(self):
        bare = TestClient(create_app(None))
        assert bare.get("/healthz").status_code == 503
        assert bare.post("/predict", json=GOOD).status_code == 503

    def test_model_info(self, client):
        res = client.get("/model")
        assert res.status_code == 200
        body = res.json()
        assert body["config"]["d_model"] == 8
        assert body["param_count"] == count_params(TataConfig(**TOY))
        assert body["norm_stats"]["alpha"] == 1000.0
        assert body["meta"] == {"source": "test"}


class TestPredict:
    def test_days_roundtrip(self, client):
        res = client.post("/predict", json=GOOD)
        assert res.status_code == 200
        body = res.json()
        assert len(body["days"]) == 10
        assert len(body["creep_microstrain"]) == 10
        assert body["days"][0] == 1 and body["days"][-1] == 10

    def test_deterministic_repeat(self, client):
        a = client.post("/predict", json=GOOD).json()
        b = client.post("/predict", json=GOOD).json()
        assert a == b

    def test_summary_consistent_with_array(self, client):
        body = client.post("/predict", json=GOOD).json()
        creep = np.array(body["creep_microstrain"])
        assert body["summary"]["final_value"] == pytest.approx(creep[-1])
        assert body["summary"]["max"] == pytest.approx(creep.max())
        assert body["summary"]["mean"] == pytest.approx(creep.mean())

    def test_days_161_accepted_162_rejected(self, client):
        ok = client.post("/predict", json={**GOOD, "days": 161})
        assert ok.status_code == 200
        assert len(ok.json()["days"]) == 161
        bad = client.post("/predict", json={**GOOD, "days": 162})
        assert bad.status_code == 400

    def test_nonpositive_feature_rejected_with_field(self, client):
        res = client.post("/predict", json={**GOOD, "fc_ksc": -10.0})
        assert res.status_code == 400
        fields = [d["field"] for d in res.json()["detail"]]
        assert "fc_ksc" in fields

    def test_missing_field_rejected(self, client):
        body = {k: v for k, v in GOOD.items() if k != "density_kg_m3"}
        res = client.post("/predict", json=body)
        assert res.status_code == 400
        assert any("density_kg_m3" in d["field"] for d in res.json()["detail"])

    def test_malformed_json_rejected(self, client):
        res = client.post("/predict", content=b"{not json",
                          headers={"content-type": "application/json"})
        assert res.status_code == 400


class TestExplain:
    def test_explain_efficiency(self, client):
        res = client.post("/explain", json={
            "density_kg_m3": 2400.0, "fc_ksc": 470.0, "e_ksc": 3.2e5,
            "initial_creep_microstrain": 20.0})
        assert res.status_code == 200
        body = res.json()
        phi_sum = sum(body["phi"].values())
        assert body["phi0"] + phi_sum == pytest.approx(body["prediction_microstrain"],
                                                       abs=1e-6)
        assert body["context_policy"] == "own-prefix"
        assert list(body["phi"].keys()) == ["density_kg_m3", "fc_ksc", "e_ksc"]

    def test_explain_with_prefix(self, client):
        res = client.post("/explain", json={
            "density_kg_m3": 2400.0, "fc_ksc": 470.0, "e_ksc": 3.2e5,
            "creep_prefix_microstrain": [10.0, 30.0, 45.0],
            "time_prefix_day": [1.0, 2.0, 3.0]})
        assert res.status_code == 200

    def test_mismatched_prefixes_rejected(self, client):
        res = client.post("/explain", json={
            "density_kg_m3": 2400.0, "fc_ksc": 470.0, "e_ksc": 3.2e5,
            "creep_prefix_microstrain": [10.0, 30.0]})
        assert res.status_code == 400


class TestTrajectoryDownload:
    def test_csv_after_predict(self, ckpt_path):
        local = TestClient(create_app(ckpt_path))
        assert local.get("/trajectory.csv").status_code == 404
        body = local.post("/predict", json=GOOD).json()
        res = local.get("/trajectory.csv")
        assert res.status_code == 200
        assert res.headers["content-type"].startswith("text/csv")
        lines = res.text.strip().splitlines()
        assert lines[0] == "day,creep_microstrain"
        assert len(lines) == GOOD["days"] + 1
        day, value = lines[1].split(",")
        assert int(day) == 1
        assert float(value) == pytest.approx(body["creep_microstrain"][0])
