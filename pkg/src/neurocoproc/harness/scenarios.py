"""Scenario loops that wire plants, decoders, encoders and co-processors
together and emit a run artifact directory.

Every scenario draws all randomness from ``SeedSequence(cfg.seed)`` so a
config snapshot regenerates its artifact byte for byte.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import coproc, decoders, encoders, mimo, plant
from . import persist
from .config import ScenarioConfig, validate
from .metrics import compute_roc, mutual_information


class ScenarioError(RuntimeError):
    """A constituent operation failed; the message names the scenario."""


@dataclass
class RunArtifact:
    path: Path
    config: dict
    metrics_header: list
    metrics_rows: list
    manifest: dict

    def metric(self, name):
        """Column of the metrics table whose header starts with ``name``."""
        for i, h in enumerate(self.metrics_header):
            if h == name or h.startswith(name + "["):
                return np.array([row[i] for row in self.metrics_rows], dtype=float)
        raise KeyError(name)


class _Out:
    """Collects the files a scenario writes below the run directory."""

    def __init__(self, root: Path):
        self.root = root

    def csv(self, rel, header, rows):
        persist.write_csv(self.root / rel, header, rows)

    def weights(self, rel, obj):
        persist.persist_weights(obj, self.root / "weights" / rel)

    def json(self, rel, doc):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(persist.dumps(doc))


def _rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# prosthetic control: Kalman decoding, interleaved recording, torque feedback
# ---------------------------------------------------------------------------

def _prosthetic(cfg: ScenarioConfig, out: _Out):
    P, D, E, C = cfg.plant, cfg.decoder, cfg.encoder, cfg.coprocessor
    r_tune, r_train, r_loop = _rngs(cfg.seed, 3)
    G0 = np.asarray(P["actuator_gains"], dtype=float)
    dt = P["dt"]
    arm = plant.MotorPlant(P["decay"] * np.eye(G0.shape[0]), dt * G0, P["lesion_mask"],
                           P["noise"], dt, seed=cfg.seed)
    # the decoder-to-actuator map is designed for the intact limb
    drive = np.linalg.pinv(G0)
    tuning = D["tuning"] * r_tune.standard_normal((D["units"], G0.shape[0]))

    def rates(v, rng):
        return (D["baseline_rate"] + tuning @ v
                + D["rate_noise"] * rng.standard_normal(D["units"]))

    # observation period: smooth random intended velocities
    T = D["train_steps"]
    V = np.zeros((T, G0.shape[0]))
    for k in range(1, T):
        V[k] = 0.95 * V[k - 1] + 0.3 * r_train.standard_normal(G0.shape[0])
    F = np.array([rates(v, r_train) for v in V])
    offset = F.mean(axis=0)
    model = decoders.fit_kalman(V, F - offset)
    out.weights("kalman.json", model)

    sched = encoders.InterleaveSchedule(E["record_ms"], E["stim_ms"], E["blank_ms"])
    mapping = {i: encoders.TorqueChannel(i, E["torque_gain"], E["max_amplitude"])
               for i in range(G0.shape[0])}
    log = encoders.PulseLog()
    header = ["session", "endpoint_mse[m^2]", "path_mse[m^2]", "decode_mse[(m/s)^2]",
              "success_rate[fraction]", "valid_frames[fraction]", "feedback_pulses[count]"]
    rows = []
    step_ms = 1000.0 * dt
    clock = 0
    for s in range(cfg.sessions):
        end_err, path_err, dec_err, hits, valid, n_frames = [], [], [], 0, 0, 0
        pulses_before = len(log.rows)
        for _ in range(C["trials_per_session"]):
            angle = r_loop.uniform(0, 2 * np.pi)
            target = np.array([np.cos(angle), np.sin(angle)])
            arm.reset()
            pos = arm.state.copy()
            km = replace(model, mean=np.zeros(G0.shape[0]), cov=model.Q.copy())
            for _ in range(C["steps_per_trial"]):
                t_ms = clock * step_ms
                clock += 1
                v = C["reach_gain"] * (target - pos)
                speed = np.linalg.norm(v)
                if speed > C["max_speed"]:
                    v *= C["max_speed"] / speed
                y = rates(v, r_loop) - offset
                if encoders.interleave_gate(t_ms, sched) is encoders.Gate.RECORD_VALID:
                    mean, cov = decoders.kalman_step(km, y)
                    valid += 1
                else:
                    mean, cov = decoders.kalman_predict(km)
                n_frames += 1
                km = replace(km, mean=mean, cov=cov)
                act = drive @ mean
                pos = plant.plant_step(arm, act)
                torques = np.abs(G0 @ (arm.lesion_mask * act))
                pattern = encoders.torque_feedback_encode(torques, mapping,
                                                          pulse_width=E["pulse_width"])
                delivered = encoders.defer_pulse(t_ms, sched)
                for ch in pattern.channels:
                    log.add(t_ms, delivered, ch, pattern.amplitudes[ch], pattern.pulse_width)
                path_err.append(np.mean((pos - target) ** 2))
                dec_err.append(np.mean((mean - v) ** 2))
            err = float(np.mean((pos - target) ** 2))
            end_err.append(err)
            hits += np.linalg.norm(pos - target) < C["success_radius"]
        rows.append([s, np.mean(end_err), np.mean(path_err), np.mean(dec_err),
                     hits / C["trials_per_session"], valid / n_frames,
                     len(log.rows) - pulses_before])
    out.csv("logs/pulses.csv", log.header, log.rows)
    return header, rows


# ---------------------------------------------------------------------------
# limb reanimation: operant FES, SVM motion decoding, percent activation, LDA gait
# ---------------------------------------------------------------------------

def _limb(cfg: ScenarioConfig, out: _Out):
    P, D, E, C = cfg.plant, cfg.decoder, cfg.encoder, cfg.coprocessor
    fes = encoders.FesParams()
    knots = E["knots"]
    motions = encoders.motion_pattern_table(amplitude=E["motion_amplitude"])
    n_ch = len(motions[1].amplitudes)
    groups = ("elbow", "wrist", "hand")
    library = {}
    for g, name in enumerate(groups):
        amps = np.zeros(n_ch)
        amps[g * 4:(g + 1) * 4] = E["motion_amplitude"]
        library[name] = encoders.StimPattern(amps, frequency=50.0, pulse_width=500.0,
                                             label=name)
    header = ["session", "fes_tracking_mse[rad^2]", "svm_accuracy[fraction]",
              "percent_mse[fraction^2]", "lda_accuracy[fraction]"]
    rows, motion_log, gait_log = [], [], []
    for s in range(cfg.sessions):
        r_fes, r_svm, r_pct, r_lda = _rngs([cfg.seed, s], 4)

        # operant conditioning of a single cell driving FES of the wrist
        theta, spikes, sq = 0.0, [], []
        step = P["dt_ms"]
        for k in range(C["fes_steps"]):
            now = (k + 1) * step
            target = 0.8 * np.sin(2 * np.pi * now / 2000.0)
            u = target * (1 - P["decay"]) / P["gain"] + C["track_gain"] * (target - theta)
            if u > 0:
                r = fes.flexor_threshold + u / fes.flexor_gain
            elif u < 0:
                r = max(0.0, fes.extensor_threshold + u / fes.extensor_gain)
            else:
                r = 0.5 * (fes.flexor_threshold + fes.extensor_threshold)
            ms = np.arange(int(step))
            fired = r_fes.random(ms.size) < r / 1000.0
            spikes.extend((now - step + ms[fired] + 1).tolist())
            rate = decoders.operant_rate(spikes, D["rate_window_ms"], now)
            net_current = encoders.fes_flexor(rate, fes) - encoders.fes_extensor(rate, fes)
            theta = P["decay"] * theta + P["gain"] * net_current
            sq.append((theta - target) ** 2)

        # 6-class motion decoding from gamma-band power, piecewise intensity
        fs, n_samp = 1000.0, 250
        t = np.arange(n_samp) / fs
        profile = r_svm.uniform(0.3, 2.0, (6, D["svm_channels"]))

        def trial(m):
            amp = profile[m - 1] * (1 + 0.3 * r_svm.standard_normal(D["svm_channels"]))
            phase = r_svm.uniform(0, 2 * np.pi, D["svm_channels"])
            sig = (amp[:, None] * np.sin(2 * np.pi * 100.0 * t + phase[:, None])
                   + r_svm.standard_normal((D["svm_channels"], n_samp)))
            return np.log([decoders.band_power(ch, fs, 70.0, 130.0) for ch in sig])

        labels = np.repeat(np.arange(1, 7), 2 * D["svm_trials_per_class"])
        feats = np.array([trial(m) for m in labels])
        test = np.zeros(labels.size, dtype=bool)
        test[1::2] = True
        mu, sd = feats[~test].mean(0), feats[~test].std(0) + 1e-12
        Z = (feats - mu) / sd
        clf = decoders.hinge_fit(Z[~test], labels[~test], lam=D["svm_lambda"])
        correct = 0
        for i in np.flatnonzero(test):
            scores = clf.weights @ Z[i] + clf.biases
            pred = decoders.hinge_predict(clf, Z[i])
            level = float(np.clip((np.max(scores) + 1) / 2, 0, 1))
            intensity = encoders.intensity_piecewise(level, knots)
            pattern = motions[pred]
            correct += pred == labels[i]
            motion_log.append((s, i, labels[i], pred, level, intensity,
                               float(np.max(pattern.amplitudes) * intensity)))
        svm_acc = correct / test.sum()

        # percent activation from a linear rate decoder
        B = 20.0 * r_pct.standard_normal((D["percent_units"], len(groups)))
        pct = r_pct.uniform(0, 1, (D["percent_trials"], len(groups)))
        rates = 10.0 + pct @ B.T + 2.0 * r_pct.standard_normal((len(pct), D["percent_units"]))
        half = len(pct) // 2
        base = rates[:half].mean(0)
        dec = decoders.fit_linear_decoder(rates[:half] - base,
                                          pct[:half] - pct[:half].mean(0), assist_rounds=1)
        est = np.clip(decoders.decode_velocity(dec, rates[half:] - base)
                      + pct[:half].mean(0), 0, 1)
        for p in est[:5]:
            encoders.percent_activation_encode(dict(zip(groups, p)), library,
                                               max_amplitude=E["motion_amplitude"])
        pct_mse = float(np.mean((est - pct[half:]) ** 2))

        # gait-event LDA driving spinal hotspot stimulation
        d = D["lda_features"]
        centers = np.stack([np.zeros(d), 1.5 * r_lda.standard_normal(d) / np.sqrt(d) + 1.0])
        y = r_lda.integers(0, 2, D["lda_trials"])
        x = centers[y] + r_lda.standard_normal((y.size, d))
        half = y.size // 2
        lda = decoders.lda_fit(x[:half], y[:half])
        hits = 0
        for i in range(half, y.size):
            pred = decoders.lda_predict(lda, x[i])
            hits += pred == y[i]
            gait_log.append((s, i, int(y[i]), pred,
                             encoders.spinal_event_encode(pred).label))
        rows.append([s, np.mean(sq), svm_acc, pct_mse, hits / (y.size - half)])
        if s == cfg.sessions - 1:
            out.weights("hinge.json", clf)
            out.weights("lda.json", lda)
            out.weights("percent_decoder.json", dec)
    out.csv("logs/motion_stim.csv", ("session", "trial", "true_motion", "decoded_motion",
                                     "decoder_output", "intensity", "peak_amplitude_mA"),
            motion_log)
    out.csv("logs/gait_stim.csv", ("session", "trial", "true_event", "decoded_event",
                                   "hotspot"), gait_log)
    return header, rows


# ---------------------------------------------------------------------------
# plasticity induction: spike-triggered conditioning
# ---------------------------------------------------------------------------

def _cos(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(a @ b / (na * nb)) if na > 0 and nb > 0 else 0.0


def _plasticity(cfg: ScenarioConfig, out: _Out):
    P, D, E, C = cfg.plant, cfg.decoder, cfg.encoder, cfg.coprocessor
    stdp = plant.StdpParams(P["a_plus"], P["a_minus"], P["tau_plus"], P["tau_minus"],
                            max(1.0, P["w_pool"]))
    header = ["session", "conditioned_dw[weight]", "control_dw[weight]",
              "cosine_pre[1]", "cosine_post[1]", "spikes_detected[count]", "pulses[count]"]
    rows, trace = [], []
    for s in range(cfg.sessions):
        seed = int(np.random.SeedSequence([cfg.seed, s]).generate_state(1)[0])
        net = plant.cortical_network(P["n_per_site"], P["n_pool"], P["w_cross"], P["w_pool"],
                                     stdp=stdp, seed=seed)
        probe = dict(n_trials=C["probe_trials"], seed=seed, dt=E["dt_ms"])
        pre = _cos(plant.output_effect_map(net, "rec", **probe).mean_vector,
                   plant.output_effect_map(net, "stim", **probe).mean_vector)
        log = coproc.identity_coprocessor(net, "rec", "stim", E["delay_ms"], C["duration_ms"],
                                          seed, dt=E["dt_ms"], background_hz=D["background_hz"])
        post = _cos(plant.output_effect_map(log.net, "rec", **probe).mean_vector,
                    plant.output_effect_map(log.net, "stim", **probe).mean_vector)
        wc, wk = log.weights["conditioned"], log.weights["control"]
        trace.extend((s, t, a, b) for t, a, b in zip(log.times, wc, wk))
        rows.append([s, wc[-1] - wc[0], wk[-1] - wk[0], pre, post, log.spikes_detected,
                     len(log.pulses)])
    out.csv("logs/conditioning.csv", ("session",) + coproc.ConditioningLog.header, trace)
    return header, rows


# ---------------------------------------------------------------------------
# memory bridge: MIMO identification and spike-to-pulse encoding
# ---------------------------------------------------------------------------

def generating_bank(n_inputs, n_outputs, M_k, M_h, rng, bin_ms=2.0):
    """Reference MIMO bank with smooth excitatory/biphasic kernels."""
    tau = np.arange(1, M_k + 1)
    shapes = (1.2 * np.exp(-tau / 3.0), -0.8 * np.exp(-tau / 2.0) + 0.3 * np.exp(-tau / 5.0))
    h = -2.0 * 0.5 ** np.arange(M_h)
    bank = []
    for j in range(n_outputs):
        k = np.array([shapes[(i + j) % 2] for i in range(n_inputs)])
        k *= 1.0 + 0.2 * rng.uniform(-1, 1, (n_inputs, 1))
        bank.append(mimo.MisoModel(k, h, 1.5, 1.0, bin_ms))
    return bank


def _memory(cfg: ScenarioConfig, out: _Out):
    P, D, E = cfg.plant, cfg.decoder, cfg.encoder
    header = ["session", "channel", "kernel_pearson[1]", "true_rate[Hz]",
              "predicted_rate[Hz]", "test_loglik[nats/bin]", "iterations[count]"]
    rows = []
    for s in range(cfg.sessions):
        r_gen, r_x = _rngs([cfg.seed, s], 2)
        truth = generating_bank(P["n_inputs"], P["n_outputs"], D["M_k"], D["M_h"], r_gen,
                                P["bin_ms"])
        x = (r_x.random((P["n_inputs"], D["train_bins"])) < P["input_rate"]).astype(float)
        y = mimo.mimo_predict(truth, x, seed=[cfg.seed, s, 1])
        bank = mimo.mimo_fit(x, y, D["M_k"], D["M_h"], bin_ms=P["bin_ms"])
        x_test = (r_x.random((P["n_inputs"], D["test_bins"])) < P["input_rate"]).astype(float)
        y_test = mimo.mimo_predict(truth, x_test, seed=[cfg.seed, s, 2])
        y_pred = mimo.mimo_predict(bank, x_test, seed=[cfg.seed, s, 3])
        per_s = 1000.0 / P["bin_ms"]
        for j, (m, g) in enumerate(zip(bank, truth)):
            X = mimo.design_matrix(x_test, y_test[j], m.M_k, m.M_h)
            beta = np.r_[m.k.ravel(), m.h, m.theta]
            rows.append([s, j, float(np.corrcoef(m.k.ravel(), g.k.ravel())[0, 1]),
                         y_test[j].mean() * per_s, y_pred[j].mean() * per_s,
                         mimo.probit_loglik(beta, X, y_test[j]) / y_test.shape[1],
                         m.fit_info["iterations"]])
        if s == cfg.sessions - 1:
            out.weights("mimo_bank.json", bank)
            persist.write_spikes_csv(out.root / "logs/predicted_spikes.csv", y_pred)
            out.json("logs/predicted_spikes_rle.json", persist.spikes_to_rle(y_pred, P["bin_ms"]))
            cmds = mimo.mimo_stim_encode(y_pred, {j: j for j in range(len(bank))},
                                         P["bin_ms"], E["amplitude"], E["pulse_width"])
            out.csv("logs/pulses.csv", ("time_ms", "channel", "amplitude", "pulse_width_us",
                                        "biphasic"),
                    [(c.time_ms, c.channel, c.amplitude, c.pulse_width, c.biphasic)
                     for c in cmds])
    return header, rows


# ---------------------------------------------------------------------------
# seizure suppression: burst-triggered stimulation, mu-band DBS trigger
# ---------------------------------------------------------------------------

FEATURE_BANDS = ((4.0, 8.0), (8.0, 12.0), (12.0, 16.0), (16.0, 30.0))


def _burst_window(n, fs, rng, amplitude, hz, burst):
    x = rng.standard_normal(n)
    if burst:
        length = int(rng.uniform(0.5, 1.0) * fs)
        start = int(rng.integers(n // 4, n - length))
        t = np.arange(length) / fs
        x[start:start + length] += (amplitude * np.hanning(length)
                                    * np.sin(2 * np.pi * hz * t + rng.uniform(0, 2 * np.pi)))
    return x


def _mu_window(n, fs, rng, amplitude, imagery):
    t = np.arange(n) / fs
    amp = amplitude * (0.4 if imagery else 1.0)
    return amp * np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi)) \
        + 0.5 * rng.standard_normal(n)


def _seizure(cfg: ScenarioConfig, out: _Out):
    P, D, E, C = cfg.plant, cfg.decoder, cfg.encoder, cfg.coprocessor
    fs, n = P["fs"], P["window"]
    band = tuple(D["band"])
    pattern = np.asarray(E["pattern"], dtype=float)
    header = ["session", "burst_auc[1]", "burst_mi[bits]", "cpn_agreement[fraction]",
              "intention_auc[1]", "intention_mi[bits]", "stimulations[count]"]
    rows, stim_log = [], []
    cpn = None
    for s in range(cfg.sessions):
        r_lfp, r_mu = _rngs([cfg.seed, s], 2)
        W = C["windows"]
        truth = r_lfp.random(W) < P["burst_prob"]
        wins = [_burst_window(n, fs, r_lfp, P["burst_amplitude"], P["burst_hz"], b)
                for b in truth]
        detected = np.array([decoders.detect_burst(w, fs, band, D["k_sigma"]) for w in wins])
        scores = np.array([decoders.burst_score(w, fs, band) for w in wins])
        feats = np.log([[decoders.band_power(w, fs, lo, hi) for lo, hi in FEATURE_BANDS]
                        for w in wins])
        feats = (feats - feats.mean(0)) / (feats.std(0) + 1e-12)
        targets = detected[:, None] * pattern[None, :]
        half = W // 2
        cpn = coproc.make_net([feats.shape[1], C["hidden"], pattern.size], "sigmoid",
                              seed=cfg.seed)
        res = coproc.train_cpn_supervised(
            cpn, feats[:half], targets[:half],
            coproc.TrainConfig(C["learning_rate"], C["epochs"], batch_size=half,
                               seed=cfg.seed))
        cpn = res.net
        stims = coproc.net_forward(cpn, feats[half:])
        fire = (np.sum((stims - pattern) ** 2, axis=1)
                < np.sum(stims ** 2, axis=1))
        agreement = float(np.mean(fire == detected[half:]))
        for i in np.flatnonzero(fire):
            w = half + i
            for ch in np.flatnonzero(pattern):
                stim_log.append((s, w, ch, stims[i, ch], int(truth[w])))

        imagery = r_mu.random(W) < P["imagery_prob"]
        rest = [_mu_window(n, fs, r_mu, P["mu_amplitude"], False) for _ in range(20)]
        lo, hi = D["mu_band"]
        baseline = float(np.mean([decoders.band_power(w, fs, lo, hi) for w in rest]))
        dbs = decoders.BandPowerDecoder(lo, hi, n, baseline, D["drop_fraction"], fs)
        mu_wins = [_mu_window(n, fs, r_mu, P["mu_amplitude"], b) for b in imagery]
        trig = np.array([decoders.detect_intention(dbs, w) for w in mu_wins])
        mu_pow = np.array([decoders.band_power(w, fs, lo, hi) for w in mu_wins])
        rows.append([s, compute_roc(scores, truth).auc, mutual_information(detected, truth),
                     agreement, compute_roc(-mu_pow, imagery).auc,
                     mutual_information(trig, imagery), int(fire.sum())])
    if cpn is not None:
        out.weights("cpn.json", cpn)
    out.csv("logs/stim.csv", ("session", "window", "channel", "amplitude", "true_burst"),
            stim_log)
    return header, rows


# ---------------------------------------------------------------------------
# co-adaptation: CPN + EN with periodic emulator refresh
# ---------------------------------------------------------------------------

def coadaptation_setup(cfg: ScenarioConfig):
    """Plant, task and fresh CPN/EN for a co-adaptation config."""
    P, D, C = cfg.plant, cfg.decoder, cfg.coprocessor
    (r_task,) = _rngs(cfg.seed, 1)
    arm = plant.MotorPlant(P["dynamics"], P["input_matrix"], P["lesion_mask"], P["noise"],
                           seed=cfg.seed)
    task = coproc.ReachTask(r_task.standard_normal((D["intention_dim"], arm.n_states)),
                            D["intention_noise"], P["steps"])
    cpn = coproc.make_net([D["intention_dim"], C["hidden"], arm.n_inputs], "identity",
                          seed=cfg.seed, use_bias=False)
    en = coproc.make_net([arm.n_inputs, arm.n_states], "identity", seed=cfg.seed + 1,
                         use_bias=False)
    return arm, task, cpn, en


def _coadapt(cfg: ScenarioConfig, out: _Out):
    C, E = cfg.coprocessor, cfg.encoder
    arm, task, cpn, en = coadaptation_setup(cfg)
    train = coproc.TrainConfig(C["learning_rate"], C["epochs"], batch_size=10 ** 9,
                               seed=cfg.seed)
    schedule = {"sessions": cfg.sessions, "en_refresh_every": C["en_refresh_every"],
                "perturb_session": C["perturb_session"], "perturb_scale": C["perturb_scale"]}
    metrics, cpn, en = coproc.coadapt_loop(cpn, en, arm, schedule, train, task,
                                           trials_per_session=C["trials_per_session"],
                                           probe_noise=E["probe_noise"], seed=cfg.seed)
    out.weights("cpn.json", cpn)
    out.weights("en.json", en)
    header = ["session", "behavioral_mse[m^2]", "en_val_mse[m^2]", "cpn_loss[m^2]",
              "plant_trials[count]"]
    rows = [[m["session"], m["behavioral_mse"], m["en_val_mse"], m["cpn_loss"],
             m["plant_trials"]] for m in metrics]
    return header, rows


RUNNERS = {
    "prosthetic_control": _prosthetic,
    "limb_reanimation": _limb,
    "plasticity_induction": _plasticity,
    "memory_bridge": _memory,
    "seizure_suppression": _seizure,
    "coadaptation": _coadapt,
}


def _prepare(root: Path):
    """Make ``root`` empty, removing only files a previous run recorded."""
    if not root.exists():
        root.mkdir(parents=True)
        return
    manifest = root / "manifest.json"
    if manifest.is_file():
        for rel in json.loads(manifest.read_text()).get("files", {}):
            (root / rel).unlink(missing_ok=True)
        manifest.unlink()
        for sub in sorted((p for p in root.rglob("*") if p.is_dir()), reverse=True):
            if not any(sub.iterdir()):
                sub.rmdir()
    if any(root.iterdir()):
        raise ScenarioError(f"output directory {root} is not empty and holds no prior run")


def run_scenario(cfg: ScenarioConfig | dict, output_dir=None) -> RunArtifact:
    """Execute one scenario and write its artifact directory.

    ``output_dir`` overrides the configured directory. The config snapshot
    written to ``config.json`` is the fully resolved configuration.
    """
    if isinstance(cfg, dict):
        cfg = validate(cfg)
    root = Path(output_dir if output_dir is not None else cfg.output_dir)
    _prepare(root)
    out = _Out(root)
    snapshot = cfg.to_dict()
    out.json("config.json", snapshot)
    try:
        header, rows = RUNNERS[cfg.scenario](cfg, out)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise ScenarioError(f"{cfg.scenario}: {type(exc).__name__}: {exc}") from exc
    for r, row in enumerate(rows):
        for c, v in enumerate(row):
            if isinstance(v, float) and not np.isfinite(v) and header[c] != "en_val_mse[m^2]":
                raise ScenarioError(f"{cfg.scenario}: non-finite metric {header[c]} in row {r}")
    out.csv("metrics.csv", header, rows)
    _, manifest = persist.write_manifest(root, cfg.scenario)
    return RunArtifact(root, snapshot, header, rows, manifest)
