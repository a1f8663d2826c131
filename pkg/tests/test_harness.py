import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neurocoproc.coproc import make_net
from neurocoproc.decoders import HingeClassifier, KalmanModel, LdaModel, LinearDecoder
from neurocoproc.harness import persist
from neurocoproc.harness.cli import main
from neurocoproc.harness.config import (
    SCENARIOS, ConfigError, default_config, load_config, validate,
)
from neurocoproc.harness.metrics import (
    MetricsError, compute_roc, entropy_bits, mi_from_counts, mutual_information,
)
from neurocoproc.harness.scenarios import ScenarioError, run_scenario
from neurocoproc.mimo import MisoModel


def doc(scenario="coadaptation", **kw):
    return {"schema": 1, "scenario": scenario, "seed": 0, **kw}


class TestConfig:
    @pytest.mark.parametrize("scenario", SCENARIOS)
    def test_defaults_validate(self, scenario):
        cfg = default_config(scenario, seed=3)
        assert validate(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad, path", [
        ({"schema": 2}, "schema"),
        ({"scenario": "flight"}, "scenario"),
        ({"seed": -1}, "seed"),
        ({"seed": 1.5}, "seed"),
        ({"colour": 1}, "colour"),
        ({"plant": {"noise": "high"}}, "plant.noise"),
        ({"plant": {"viscosity": 1.0}}, "plant.viscosity"),
        ({"coprocessor": {"en_refresh_every": 0}}, "coprocessor.en_refresh_every"),
        ({"plant": {"lesion_mask": [1, 2, 0, 0]}}, "plant.lesion_mask[1]"),
        ({"sessions": -1}, "sessions"),
    ])
    def test_field_path_in_error(self, bad, path):
        with pytest.raises(ConfigError) as info:
            validate({**doc(), **bad})
        assert info.value.path == path
        assert str(info.value).startswith(path)

    def test_seed_required(self):
        with pytest.raises(ConfigError, match="seed"):
            validate({"schema": 1, "scenario": "coadaptation"})

    def test_partial_override_merges(self):
        cfg = validate(doc(coprocessor={"hidden": 3}))
        assert cfg.coprocessor["hidden"] == 3
        assert cfg.coprocessor["epochs"] == default_config("coadaptation").coprocessor["epochs"]

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_seizure_band_check(self):
        with pytest.raises(ConfigError) as info:
            validate(doc("seizure_suppression", decoder={"band": [30, 10]}))
        assert info.value.path == "decoder.band"


class TestPersist:
    def objects(self):
        rng = np.random.default_rng(0)
        net = make_net([3, 5, 2], ["relu", "sigmoid"], seed=1)
        net.biases = [rng.standard_normal(5), rng.standard_normal(2)]
        return [
            net,
            make_net([2, 2], "identity", use_bias=False),
            KalmanModel.create(rng.standard_normal((2, 2)) * 0.3, rng.standard_normal((3, 2)),
                               np.eye(2), np.eye(3)),
            LinearDecoder(rng.standard_normal((4, 2))),
            LdaModel(rng.standard_normal((2, 3)), np.eye(3), np.array([0.3, 0.7])),
            HingeClassifier(rng.standard_normal((6, 4)), rng.standard_normal(6),
                            np.arange(1, 7), 1e-3),
            [MisoModel(rng.standard_normal((2, 4)), rng.standard_normal(2), 0.7 + i)
             for i in range(3)],
        ]

    @staticmethod
    def arrays_of(obj):
        if isinstance(obj, list):
            return [a for o in obj for a in TestPersist.arrays_of(o)]
        out = []
        for v in vars(obj).values():
            if isinstance(v, np.ndarray):
                out.append(v)
            elif isinstance(v, list) and v and isinstance(v[0], np.ndarray):
                out.extend(v)
            elif isinstance(v, float):
                out.append(np.array(v))
        return out

    def test_round_trip_bit_exact(self, tmp_path):
        for i, obj in enumerate(self.objects()):
            back = persist.load_weights(persist.persist_weights(obj, tmp_path / f"{i}.json"))
            assert type(back) is type(obj)
            a, b = self.arrays_of(obj), self.arrays_of(back)
            assert len(a) == len(b)
            for x, y in zip(a, b):
                assert x.tobytes() == y.tobytes()

    def test_truncated_file(self, tmp_path):
        p = persist.persist_weights(self.objects()[0], tmp_path / "w.json")
        text = p.read_text()
        p.write_text(text[:len(text) // 2])
        with pytest.raises(persist.SchemaError):
            persist.load_weights(p)

    def test_version_mismatch(self, tmp_path):
        p = persist.persist_weights(self.objects()[0], tmp_path / "w.json")
        d = json.loads(p.read_text())
        d["schema"] = 99
        p.write_text(json.dumps(d))
        with pytest.raises(persist.UnsupportedVersion):
            persist.load_weights(p)

    def test_shape_mismatch(self, tmp_path):
        p = persist.persist_weights(self.objects()[3], tmp_path / "w.json")
        text = p.read_text().replace('"shape": [\n   4,', '"shape": [\n   5,')
        p.write_text(text)
        with pytest.raises(persist.SchemaError):
            persist.load_weights(p)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(1, 20), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_decimal_strings_round_trip(values):
    back = np.array([float(persist.fmt(v)) for v in values])
    assert back.tobytes() == values.tobytes()


class TestTables:
    def test_csv(self, tmp_path):
        persist.write_csv(tmp_path / "t.csv", ["a[1]", "b"], [[1, 0.1], [2, True]])
        header, rows = persist.read_csv(tmp_path / "t.csv")
        assert header == ["a[1]", "b"] and rows == [["1", "0.10000000000000001"], ["2", "1"]]

    def test_spike_formats(self, tmp_path, rng):
        y = (rng.random((3, 40)) < 0.3).astype(int)
        y[1, 0] = 1
        persist.write_spikes_csv(tmp_path / "s.csv", y)
        assert np.array_equal(persist.read_spikes_csv(tmp_path / "s.csv"), y)
        assert np.array_equal(persist.rle_to_spikes(persist.spikes_to_rle(y)), y)

    def test_rle_bad_lengths(self):
        with pytest.raises(persist.SchemaError):
            persist.rle_to_spikes({"schema": 1, "n_bins": 5, "runs": [[2, 2]]})

    def test_manifest(self, tmp_path):
        (tmp_path / "a.txt").write_text("x")
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "b.txt").write_text("y")
        _, d = persist.write_manifest(tmp_path, "demo")
        assert sorted(d["files"]) == ["a.txt", "sub/b.txt"]
        assert persist.verify_manifest(tmp_path) == []
        (tmp_path / "sub" / "b.txt").write_text("z")
        assert persist.verify_manifest(tmp_path) == ["sub/b.txt"]


class TestRoc:
    def test_separated(self):
        assert compute_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0

    def test_counting_oracle(self):
        assert compute_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc == 0.75

    def test_ties_grouped(self):
        roc = compute_roc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1])
        assert roc.auc == 0.5 and len(roc.fpr) == 2

    def test_coin_flip(self):
        rng = np.random.default_rng(0)
        auc = compute_roc(rng.random(10 ** 4), rng.integers(0, 2, 10 ** 4)).auc
        assert abs(auc - 0.5) <= 0.02

    def test_single_class(self):
        with pytest.raises(MetricsError):
            compute_roc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_bounds_and_negation(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [int(l) for _, l in pairs]
    if len(set(labels)) < 2:
        return
    auc = compute_roc(scores, labels).auc
    neg = compute_roc([-s for s in scores], labels).auc
    assert 0.0 <= auc <= 1.0
    assert auc + neg == pytest.approx(1.0, abs=1e-12)
    pos = [s for s, l in zip(scores, labels) if l]
    nn = [s for s, l in zip(scores, labels) if not l]
    pairwise = np.mean([(p > q) + 0.5 * (p == q) for p in pos for q in nn])
    assert auc == pytest.approx(pairwise, abs=1e-12)


class TestMutualInformation:
    def test_identical_balanced(self):
        assert mutual_information([0, 1, 0, 1], [0, 1, 0, 1]) == pytest.approx(1.0)

    def test_independent(self):
        assert mutual_information([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0

    def test_hand_counts(self):
        hand = (2 * 0.4 * np.log2(0.4 / 0.25)) + (2 * 0.1 * np.log2(0.1 / 0.25))
        assert abs(mi_from_counts([[4, 1], [1, 4]]) - hand) <= 1e-10

    def test_errors(self):
        with pytest.raises(MetricsError):
            mutual_information([0, 1], [0, 1, 1])
        with pytest.raises(MetricsError):
            mutual_information([], [])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_mi_bounds(pairs):
    a = np.array([int(x) for x, _ in pairs])
    b = np.array([int(y) for _, y in pairs])
    mi = mutual_information(a, b)
    assert 0.0 <= mi <= min(entropy_bits(a), entropy_bits(b)) + 1e-12


class TestScenarios:
    def test_coadaptation_row_count(self, tmp_path):
        art = run_scenario(doc(sessions=3), tmp_path / "run")
        assert len(art.metrics_rows) == 3
        header, rows = persist.read_csv(art.path / "metrics.csv")
        assert len(rows) == 3 and all("[" in h for h in header[1:])
        assert persist.verify_manifest(art.path) == []

    def test_prosthetic_lesion_ordering(self, tmp_path):
        lesioned = run_scenario(doc("prosthetic_control"), tmp_path / "a")
        intact = run_scenario(doc("prosthetic_control", plant={"lesion_mask": [1, 1, 1, 1]}),
                              tmp_path / "b")
        assert lesioned.metric("endpoint_mse")[-1] >= 2 * intact.metric("endpoint_mse")[-1]

    def test_refuses_foreign_directory(self, tmp_path):
        (tmp_path / "keep.txt").write_text("mine")
        with pytest.raises(ScenarioError):
            run_scenario(doc(sessions=1), tmp_path)
        assert (tmp_path / "keep.txt").read_text() == "mine"

    def test_rerun_replaces_artifact(self, tmp_path):
        first = run_scenario(doc(sessions=1), tmp_path / "r")
        digest = (first.path / "manifest.json").read_bytes()
        second = run_scenario(doc(sessions=1), tmp_path / "r")
        assert (second.path / "manifest.json").read_bytes() == digest


class TestCli:
    def test_check(self, capsys):
        assert main(["check"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert main(["run", str(missing)]) == 1
        assert str(missing) in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["dance"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_invalid_config_is_usage_error(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"schema": 1, "scenario": "coadaptation"}))
        assert main(["run", str(p)]) == 1

    def test_run_then_eval(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(doc(sessions=2, output_dir=str(tmp_path / "art"))))
        assert main(["run", str(cfg)]) == 0
        assert main(["eval", str(tmp_path / "art")]) == 0
        assert "metrics.csv: identical" in capsys.readouterr().out

    def test_eval_detects_tampering(self, tmp_path):
        run_scenario(doc(sessions=1), tmp_path / "art")
        with open(tmp_path / "art" / "metrics.csv", "a") as fh:
            fh.write("9,9,9,9,9\n")
        assert main(["eval", str(tmp_path / "art")]) == 2

    def test_configs(self, tmp_path):
        assert main(["configs", str(tmp_path)]) == 0
        for s in SCENARIOS:
            assert load_config(tmp_path / f"{s}.json").scenario == s

    def test_fit_hinge_and_linear(self, tmp_path, rng):
        X = rng.standard_normal((60, 3))
        y = (X[:, 0] > 0).astype(int) + 1
        np.savez(tmp_path / "h.npz", features=X, labels=y)
        assert main(["fit", "hinge", str(tmp_path / "h.npz"), "--out",
                     str(tmp_path / "h.json")]) == 0
        assert isinstance(persist.load_weights(tmp_path / "h.json"), HingeClassifier)
        V = rng.standard_normal((50, 2))
        np.savez(tmp_path / "l.npz", rates=V @ rng.standard_normal((2, 5)), velocities=V)
        assert main(["fit", "linear", str(tmp_path / "l.npz"), "--out",
                     str(tmp_path / "l.json")]) == 0

    def test_fit_missing_keys(self, tmp_path):
        np.savez(tmp_path / "d.npz", x=np.zeros(3))
        assert main(["fit", "lda", str(tmp_path / "d.npz")]) == 1

    def test_fit_runtime_failure(self, tmp_path):
        np.savez(tmp_path / "d.npz", samples=np.ones((4, 2)), labels=np.ones(4, dtype=int))
        assert main(["fit", "lda", str(tmp_path / "d.npz"), "--out",
                     str(tmp_path / "o.json")]) == 2
