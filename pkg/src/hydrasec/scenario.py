"""Closed-loop driver: plant -> controller -> link -> monitor, with an adversary tap.

Steps ``[0, T)`` run healthy and calibrate the residual thresholds; from step
``T`` on the adversary is armed and every residual is tested.  Each step:

1. advance the plant with the previous command and process noise;
2. measure, encode under the packet's sequence number, transmit;
3. decode, EKF predict / gate / update, residual, decision;
4. the controller computes the next command from the decoded measurement.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import channel, detector, estimator, plant
from .adversary import ReplayAdversary
from .config import ScenarioConfig, dump_config

__all__ = [
    "StepRecord",
    "RunLog",
    "run_scenario",
    "CSV_COLUMNS",
    "emit_csv",
    "read_csv",
    "emit_plot_data",
]

CSV_COLUMNS = (
    "step",
    "x1", "x2", "x3",
    "y1", "y2", "y3",
    "r1", "r2", "r3",
    "beta1", "beta2", "beta3",
    "decision",
    "violated",
    "packet_status",
    "adversary_action",
)

CALIBRATING = "cal"
_NAN3 = (math.nan, math.nan, math.nan)


@dataclass
class StepRecord:
    step: int
    x_true: tuple[float, ...]
    y_plain: tuple[float, ...]
    payload_coded: tuple[float, ...]
    y_decoded: tuple[float, ...]
    xhat: tuple[float, ...]
    residual: tuple[float, ...]
    decision: str
    violated: frozenset[int]
    packet_status: str
    adversary_action: str


@dataclass
class RunLog:
    records: list[StepRecord]
    thresholds: detector.ThresholdVector
    onset: Optional[int]
    summary: dict = field(default_factory=dict)
    capture: channel.CaptureLog = field(default_factory=channel.CaptureLog)

    def alarm_steps(self) -> list[int]:
        return [r.step for r in self.records if r.decision == detector.H1]

    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])


def _t(v) -> tuple[float, ...]:
    return tuple(float(x) for x in v)


def run_scenario(cfg: ScenarioConfig, capture: bool = False, calibrate_only: bool = False) -> RunLog:
    """Run one deterministic scenario; see the module docstring for the loop.

    With ``calibrate_only`` the run stops once the thresholds are fixed.
    """
    params = cfg.plant
    truth = cfg.true_plant()
    Q = cfg.noise.Q if cfg.estimator.Q is None else cfg.estimator.Q
    R = cfg.noise.R
    gate_cfg = estimator.GateConfig(cfg.estimator.chi2_threshold)
    innovation_mode = cfg.estimator.residual_mode == "innovation"
    T = cfg.calibration_len

    noise = plant.NoiseSource(cfg.noise)
    link = channel.Link(cfg.channel)
    rx = channel.Receiver(cfg.channel)
    adversary = ReplayAdversary(cfg.attack)
    cap = channel.CaptureLog()

    x = np.array(cfg.x0, dtype=float)
    ekf = estimator.EkfState(np.array(cfg.estimator.x0), cfg.estimator.P0, estimator.PREDICTED)
    u = plant.ActuatorInput(0.0, 0.0, 0.0)
    last_meas: Optional[np.ndarray] = None

    records: list[StepRecord] = []
    calib: list[tuple[float, ...]] = []
    thresholds: Optional[detector.ThresholdVector] = None
    gate_rejections = [0, 0]  # calibration, monitoring
    lost = 0

    for k in range(T if calibrate_only else cfg.horizon):
        if k > 0:
            x = plant.advance(x, u, truth, cfg.substeps, noise.process())
            ekf = estimator.predict(ekf, estimator.plant_transition(u, params), Q)
        y = plant.measure(x, noise.measurement())
        pkt = channel.encode(y, k, cfg.channel)

        adversary.armed = k >= T
        adversary.last_action = ""
        delivered = link.transmit(pkt, adversary)
        action = adversary.last_action
        if delivered is None:
            y_dec, status = None, "lost"
            lost += 1
        else:
            y_dec, status = rx.receive(delivered)
        if capture:
            cap.record(k, "tx", pkt, "sent")
            cap.record(k, "rx", delivered, status, action)

        if y_dec is not None:
            prior = ekf
            if estimator.gate(prior, y_dec, R, gate_cfg):
                ekf = estimator.update(prior, y_dec, R)
            else:
                gate_rejections[k >= T] += 1
            r = _t(estimator.residual(y_dec, prior if innovation_mode else ekf))
            last_meas = y_dec
        else:
            r = _NAN3

        if k < T:
            calib.append(r)
            decision, violated = CALIBRATING, frozenset()
            if k == T - 1:
                thresholds = detector.calibrate(calib, cfg.margin)
        else:
            d = detector.decide(r, thresholds)
            decision, violated = d.hypothesis, d.violated

        if last_meas is not None:
            u = plant.level_controller(
                last_meas, cfg.setpoints, params,
                cfg.controller.valve_gain, cfg.controller.pump_gain,
            )
        adversary.observe_command(u)

        records.append(StepRecord(
            step=k,
            x_true=_t(x),
            y_plain=_t(y),
            payload_coded=tuple(pkt.payload),
            y_decoded=_t(y_dec) if y_dec is not None else _NAN3,
            xhat=_t(ekf.xhat),
            residual=r,
            decision=decision,
            violated=violated,
            packet_status=status,
            adversary_action=action,
        ))

    log = RunLog(records, thresholds, adversary.onset, capture=cap)
    log.summary = _summarize(log, cfg, rx, gate_rejections, lost)
    return log


def _summarize(log: RunLog, cfg: ScenarioConfig, rx: channel.Receiver, gate_rejections, lost: int) -> dict:
    T = cfg.calibration_len
    decisions = [
        detector.Decision(r.decision, r.violated) for r in log.records[T:]
    ]
    events, delay = detector.alarm_stream(decisions, onset=log.onset, start=T)
    clean_end = log.onset if log.onset is not None else len(log.records)
    pre_onset = [e for e in events if e.step < clean_end]
    clean_steps = clean_end - T
    return {
        "alarms": len(events),
        "alarms_before_onset": len(pre_onset),
        "alarms_after_onset": len(events) - len(pre_onset),
        "onset": log.onset,
        "detection_delay": delay,
        "false_alarm_rate": len(pre_onset) / clean_steps if clean_steps > 0 else 0.0,
        "dropped_packets": rx.dropped,
        "stale_packets": rx.stale,
        "corrupt_packets": rx.corrupt,
        "lost_packets": lost,
        "gate_rejections": sum(gate_rejections),
        "gate_rejections_monitoring": gate_rejections[1],
        "beta": [float(b) for b in log.thresholds.beta],
        "margin": log.thresholds.margin,
        "calibration_len": log.thresholds.calibration_len,
    }


def _fmt(v: float) -> str:
    return repr(float(v))


def _row(rec: StepRecord, beta) -> list[str]:
    return (
        [str(rec.step)]
        + [_fmt(v) for v in rec.x_true]
        + [_fmt(v) for v in rec.y_decoded]
        + [_fmt(v) for v in rec.residual]
        + [_fmt(v) for v in beta]
        + [rec.decision, ";".join(str(i) for i in sorted(rec.violated)), rec.packet_status, rec.adversary_action]
    )


def emit_csv(log: RunLog, path: str | os.PathLike) -> tuple[Path, Path]:
    """Write the per-step CSV and a JSON summary next to it.

    Threshold columns are NaN during calibration, since they do not exist yet.
    """
    path = Path(path)
    T = log.thresholds.calibration_len
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in log.records:
            writer.writerow(_row(rec, _NAN3 if rec.step < T else log.thresholds.beta))
    summary_path = path.with_name(path.stem + "_summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(log.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path, summary_path


def read_csv(path: str | os.PathLike) -> list[dict]:
    """Parse a file written by :func:`emit_csv` back into typed rows."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for raw in reader:
            rows.append({
                "step": int(raw[0]),
                "x_true": tuple(float(v) for v in raw[1:4]),
                "y_decoded": tuple(float(v) for v in raw[4:7]),
                "residual": tuple(float(v) for v in raw[7:10]),
                "beta": tuple(float(v) for v in raw[10:13]),
                "decision": raw[13],
                "violated": frozenset(int(v) for v in raw[14].split(";") if v),
                "packet_status": raw[15],
                "adversary_action": raw[16],
            })
    return rows


_PLOT_SCRIPT = '''"""Residuals against thresholds, one panel per tank."""
import matplotlib.pyplot as plt
import numpy as np

data = np.loadtxt("residuals.dat")
onset = open("onset.dat").read().split()[0]
step = data[:, 0]
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
for i, ax in enumerate(axes):
    ax.plot(step, data[:, 1 + i], lw=0.7, label=f"r{i + 1}")
    beta = data[:, 4 + i]
    ax.plot(step, beta, "r--", lw=0.8, label="beta")
    ax.plot(step, -beta, "r--", lw=0.8)
    if onset != "none":
        ax.axvline(float(onset), color="k", ls=":", label="onset")
    ax.set_ylabel(f"tank {i + 1} [m]")
    ax.legend(loc="upper right")
axes[-1].set_xlabel("step")
fig.tight_layout()
fig.savefig("residuals.png", dpi=150)
'''


def emit_plot_data(log: RunLog, directory: str | os.PathLike) -> list[Path]:
    """Space-separated residual and threshold series plus a matplotlib script."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    beta = log.thresholds.beta
    lines = ["# step r1 r2 r3 beta1 beta2 beta3"]
    for rec in log.records:
        vals = [str(rec.step)] + [_fmt(v) for v in rec.residual] + [_fmt(b) for b in beta]
        lines.append(" ".join(vals))
    res_path = out / "residuals.dat"
    res_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    onset_path = out / "onset.dat"
    onset_path.write_text(("none" if log.onset is None else str(log.onset)) + "\n", encoding="utf-8")
    script_path = out / "plot_residuals.py"
    script_path.write_text(_PLOT_SCRIPT, encoding="utf-8")
    return [res_path, onset_path, script_path]


def write_outputs(log: RunLog, cfg: ScenarioConfig, directory: str | os.PathLike) -> list[Path]:
    """Everything a ``run`` leaves behind in ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = list(emit_csv(log, out / "run.csv"))
    paths += emit_plot_data(log, out)
    capture_path = out / "capture.csv"
    log.capture.write(capture_path)
    paths.append(capture_path)
    thr_path = out / "thresholds.txt"
    detector.save_thresholds(thr_path, log.thresholds)
    paths.append(thr_path)
    cfg_path = out / "config.txt"
    cfg_path.write_text(dump_config(cfg), encoding="utf-8")
    paths.append(cfg_path)
    return paths
