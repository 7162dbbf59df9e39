import json

import numpy as np
import pytest

from advent import fed_onset, gbdt, head
from advent.fed_onset import (
    AttackCountThreshold,
    FedClient,
    FedConfig,
    NewNodeThreshold,
    NotReadyError,
    ProtocolError,
    RetrainState,
    StaticInterval,
    WeightedIncidents,
    confirm_onset,
    decode_message,
    detect_onset,
    detect_onset_batch,
    encode_message,
    fedavg,
    round0_aggregate,
    run_training,
    should_retrain,
)
from advent.head import HeadConfig, HeadWeights
from advent.preprocess import FeatureRow


def _clients(n_clients=3, rows=60, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for cid in range(1, n_clients + 1):
        x = rng.random((rows, 10)) * 10
        y = (x[:, 0] > 5).astype(float)
        out.append(FedClient(cid=cid, x=x, y=y))
    return out


def _weights(rng, f=2, k=3, t=2):
    return HeadWeights(
        conv_kernels=rng.normal(size=(f, t)),
        conv_bias=rng.normal(size=f),
        dense=rng.normal(size=f * k),
        dense_bias=float(rng.normal()),
    )


def test_message_roundtrip_and_unknown_type():
    line = encode_message("ONSET_REPORT", 3, 5, 1, {"t": 42})
    msg = decode_message(line)
    assert (msg["type"], msg["cid"], msg["round"]) == ("ONSET_REPORT", 3, 5)
    assert msg["payload"] == {"t": 42}
    with pytest.raises(ValueError):
        encode_message("BOGUS", 1, 0, 0, {})
    with pytest.raises(ProtocolError):
        decode_message(json.dumps({"type": "BOGUS"}))


def test_round0_sorts_by_cid():
    cs = _clients(3)
    subs = [(c.cid, gbdt.train(c.x, c.y, gbdt.GbdtConfig(trees_per_client=2), client=c.cid))
            for c in cs]
    model = round0_aggregate(list(reversed(subs)), HeadConfig(filters=2))
    assert [e.client for e in model.ensembles] == [1, 2, 3]
    assert model.head.kernel_size == 2
    assert model.head.n_clients == 3


def test_round0_duplicate_cid_rejected():
    c = _clients(1)[0]
    ens = gbdt.train(c.x, c.y, gbdt.GbdtConfig(trees_per_client=2), client=c.cid)
    with pytest.raises(ProtocolError, match="duplicate"):
        round0_aggregate([(1, ens), (1, ens)])


def test_round0_empty_rejected():
    with pytest.raises(ProtocolError):
        round0_aggregate([])


def test_fedavg_equal_weights_is_mean():
    rng = np.random.default_rng(1)
    w1, w2 = _weights(rng), _weights(rng)
    avg = fedavg([(1, w1, 10), (2, w2, 10)])
    assert np.allclose(avg.conv_kernels, 0.5 * (w1.conv_kernels + w2.conv_kernels))
    assert avg.dense_bias == pytest.approx(0.5 * (w1.dense_bias + w2.dense_bias))


def test_fedavg_sample_count_weighting():
    rng = np.random.default_rng(2)
    w1, w2 = _weights(rng), _weights(rng)
    avg = fedavg([(1, w1, 30), (2, w2, 10)])
    assert np.allclose(avg.dense, 0.75 * w1.dense + 0.25 * w2.dense)


def test_fedavg_permutation_invariance_and_idempotence():
    rng = np.random.default_rng(3)
    ws = [(_weights(rng), int(rng.integers(1, 50))) for _ in range(4)]
    ups = [(i, w, n) for i, (w, n) in enumerate(ws)]
    a = fedavg(ups)
    b = fedavg([ups[2], ups[0], ups[3], ups[1]])
    assert a.allclose(b, atol=1e-12)
    solo = fedavg([(0, ws[0][0], 17)])
    assert solo.allclose(ws[0][0], atol=0)


def test_fedavg_shape_mismatch_and_bad_count():
    rng = np.random.default_rng(4)
    w = _weights(rng)
    other = _weights(rng, f=3)
    with pytest.raises(ProtocolError, match="shape"):
        fedavg([(1, w, 5), (2, other, 5)])
    with pytest.raises(ProtocolError, match="sample_count"):
        fedavg([(1, w, 0)])
    with pytest.raises(ProtocolError):
        fedavg([])


def test_run_training_round_count_and_transcript():
    cs = _clients(3, rows=40)
    transcript = []
    model = run_training(
        cs,
        gbdt.GbdtConfig(trees_per_client=2),
        HeadConfig(filters=2, epochs=2),
        FedConfig(rounds=10),
        transcript=transcript,
    )
    counts = {}
    for line in transcript:
        counts[decode_message(line)["type"]] = counts.get(decode_message(line)["type"], 0) + 1
    # R=10: one tree round then exactly 9 weight rounds.
    assert counts["TREES_UPLOAD"] == 3
    assert counts["GLOBAL_ENSEMBLE"] == 1
    assert counts["WEIGHTS_BROADCAST"] == 9
    assert counts["WEIGHTS_UPDATE"] == 27
    assert model.round == 9
    assert model.complete
    assert model.model_version == 1


def test_run_training_trees_fixed_after_round0():
    cs = _clients(2, rows=30)
    transcript = []
    model = run_training(cs, gbdt.GbdtConfig(trees_per_client=2),
                         HeadConfig(filters=2, epochs=1), FedConfig(rounds=4),
                         transcript=transcript)
    uploaded = {}
    for line in transcript:
        msg = decode_message(line)
        if msg["type"] == "TREES_UPLOAD":
            uploaded[msg["cid"]] = msg["payload"]
    # The final model's ensembles are bit-identical to the round-0 uploads.
    for ens in model.ensembles:
        assert gbdt.ensemble_to_dict(ens) == uploaded[ens.client]


def test_run_training_deterministic():
    m1 = run_training(_clients(2, rows=30), gbdt.GbdtConfig(trees_per_client=2),
                      HeadConfig(filters=2, epochs=2, rng_seed=5), FedConfig(rounds=3))
    m2 = run_training(_clients(2, rows=30), gbdt.GbdtConfig(trees_per_client=2),
                      HeadConfig(filters=2, epochs=2, rng_seed=5), FedConfig(rounds=3))
    assert m1.head.allclose(m2.head, atol=0)


def test_run_training_no_clients():
    with pytest.raises(ProtocolError, match="stalled"):
        run_training([], gbdt.GbdtConfig(), HeadConfig(), FedConfig())


def test_cold_start_payload_restores_model():
    model = run_training(_clients(2, rows=30), gbdt.GbdtConfig(trees_per_client=2),
                         HeadConfig(filters=2, epochs=1), FedConfig(rounds=2))
    lines = fed_onset.cold_start_payload(model)
    ens_msg, w_msg = (decode_message(line) for line in lines)
    assert ens_msg["type"] == "GLOBAL_ENSEMBLE"
    assert w_msg["type"] == "WEIGHTS_BROADCAST"
    assert ens_msg["model_version"] == model.model_version
    restored = head.weights_from_dict(w_msg["payload"])
    assert restored.allclose(model.head, atol=0)


def test_detect_onset_threshold_and_not_ready():
    cs = _clients(2, rows=60, seed=7)
    model = run_training(cs, gbdt.GbdtConfig(trees_per_client=2),
                         HeadConfig(filters=2, epochs=20), FedConfig(rounds=3))
    row_hi = FeatureRow(t=0, features=np.full(10, 9.0), label=1)
    row_lo = FeatureRow(t=1, features=np.full(10, 1.0), label=0)
    assert detect_onset(model, row_hi) == "attack"
    assert detect_onset(model, row_lo) == "normal"
    x = np.stack([row_hi.features, row_lo.features])
    assert detect_onset_batch(model, x).tolist() == [True, False]
    model.round, model.total_rounds = 0, 5
    with pytest.raises(NotReadyError):
        detect_onset(model, row_hi)
    with pytest.raises(NotReadyError):
        detect_onset_batch(model, x)


def test_detect_onset_tie_goes_normal():
    # Zero weights force p = sigmoid(0) = 0.5 exactly; not strictly greater.
    c = _clients(1, rows=30)[0]
    ens = gbdt.train(c.x, c.y, gbdt.GbdtConfig(trees_per_client=2), client=1)
    w = HeadWeights(conv_kernels=np.zeros((2, 2)), conv_bias=np.zeros(2),
                    dense=np.zeros(2), dense_bias=0.0)
    model = fed_onset.GlobalModel(ensembles=[ens], head=w, round=0, total_rounds=1)
    assert detect_onset(model, FeatureRow(t=0, features=np.ones(10), label=0)) == "normal"


def test_confirm_onset_quorum():
    assert confirm_onset([(1, 0.0), (2, 1.5)], quorum=2, window_s=2.0) == "confirmed"
    assert confirm_onset([(1, 0.0), (2, 3.0)], quorum=2, window_s=2.0) == "unconfirmed"
    # Same client twice is one distinct reporter.
    assert confirm_onset([(1, 0.0), (1, 0.5)], quorum=2, window_s=2.0) == "unconfirmed"
    assert confirm_onset([(1, 0.0)], quorum=1) == "confirmed"
    assert confirm_onset([], quorum=1) == "unconfirmed"
    with pytest.raises(ValueError):
        confirm_onset([], quorum=0)


def test_confirm_onset_window_slides():
    # No pair within 2 s of the earliest report, but (2,3) are within 2 s.
    reports = [(1, 0.0), (2, 5.0), (3, 6.5)]
    assert confirm_onset(reports, quorum=2, window_s=2.0) == "confirmed"


def test_retrain_policies():
    st = RetrainState(now_s=100.0, last_train_s=0.0, new_nodes=3,
                      confirmed_onsets=1, incident_counts={"onset": 2, "mnd": 5})
    assert should_retrain(st, StaticInterval(interval_s=50.0))
    assert not should_retrain(st, StaticInterval(interval_s=200.0))
    assert should_retrain(st, NewNodeThreshold(count=3))
    assert not should_retrain(st, NewNodeThreshold(count=4))
    assert not should_retrain(st, AttackCountThreshold(count=2))
    assert should_retrain(st, WeightedIncidents(weights={"onset": 1.0, "mnd": 0.5},
                                                threshold=4.0))
    with pytest.raises(ValueError):
        should_retrain(st, object())
