"""Offline calibration and online closed-loop experiment orchestration.

The closed-loop engine is shared by headless runs (a virtual subject picks
fixations) and the operator console (a human picks them), so both paths log
identically: present stimuli -> fixate -> synthesize epoch -> bandpass ->
decode -> command the robot via the navigation FSM.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scu
from .errors import NavigationFault, NoTargetError, ParameterError
from .geometry import angle_of_view, estimate_distance
from .metrics import ConfusionMatrix, bits_per_trial, itr_bpm
from .signal import (ALL_CLASSES, SsvepDataset, SsvepGenParams, StimulusClass,
                     apply_filter, design_bandpass, generate_dataset,
                     generate_epoch)
from .simworld import (ARROW_TURNS, TURN_CLASSES, Arrived, ArrowStimuli,
                       Decoded, Done, ObjectStimuli, PlanComplete, StepParams,
                       TurnComplete, Turning, WalkingToObject, World,
                       apply_arrow, assign_frequencies, detect_objects,
                       nav_transition, step_walk)

FLICKER_DURATION_S = 3.0
ONLINE_TRIAL_BASE = 100_000  # keeps online epochs disjoint from calibration trials


@dataclass
class VirtualSubject:
    """Scripted stand-in for a human operator.

    Fixates the intended stimulus, except with probability lapse_rate it
    fixates a uniformly random one of the displayed stimuli (lapse_rate=1
    is a fully random subject, lapse_rate=0 a perfect oracle).
    """

    gen_params: SsvepGenParams
    lapse_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lapse_rate <= 1.0):
            raise ParameterError("lapse_rate must be in [0,1]")
        self._rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def oracle(cls, gen_params: SsvepGenParams) -> "VirtualSubject":
        return cls(gen_params=gen_params, lapse_rate=0.0)

    @classmethod
    def random_subject(cls, gen_params: SsvepGenParams, seed: int = 0) -> "VirtualSubject":
        return cls(gen_params=gen_params, lapse_rate=1.0, rng_seed=seed)

    def choose_fixation(self, intended: StimulusClass, options: list) -> StimulusClass:
        if self._rng.random() < self.lapse_rate:
            return options[self._rng.integers(len(options))]
        return intended


@dataclass
class CalibrationResult:
    dataset: SsvepDataset
    model: scu.ScuModel
    cv_report: scu.CvReport


def run_calibration(subject: VirtualSubject, hp: scu.ScuHyperparams,
                    trials_per_class: int = 40, cv_folds: int = 10,
                    out_dir=None) -> CalibrationResult:
    """Generate the a-priori dataset, bandpass, train and cross-validate."""
    from .signal import save_dataset  # local to keep module surface tidy

    raw = generate_dataset(subject.gen_params, trials_per_class)
    spec = design_bandpass()
    filtered = SsvepDataset(epochs=[apply_filter(spec, ep) for ep in raw.epochs],
                            metadata=dict(raw.metadata))
    report = scu.fit(filtered, hp)
    cv = scu.cross_validate(filtered, hp, k=cv_folds)
    result = CalibrationResult(dataset=raw, model=report.model, cv_report=cv)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_dataset(raw, out / "dataset.ssvep")
        scu.save_model(report.model, out / "model.scu")
        cv_doc = {"fold_accuracies": cv.fold_accuracies, "mean": cv.mean,
                  "std": cv.std, "trials_per_class": trials_per_class}
        (out / "cv_report.json").write_text(json.dumps(cv_doc, indent=2))
    return result


@dataclass
class TrialRecord:
    trial: int
    mode: str  # "object" | "arrow"
    displayed: list  # [{"freq_hz", "object_id"|None}]
    intended: StimulusClass
    fixated: StimulusClass
    decoded: StimulusClass
    probabilities: list
    latency_s: float
    command: str
    pose_after: tuple
    correct: bool
    failed: bool = False  # decode had no matching stimulus

    def to_json(self) -> dict:
        return {
            "trial": self.trial,
            "mode": self.mode,
            "displayed": self.displayed,
            "intended_hz": self.intended.freq_hz,
            "fixated_hz": self.fixated.freq_hz,
            "decoded_hz": self.decoded.freq_hz,
            "probs": [float(p) for p in self.probabilities],
            "latency_s": self.latency_s,
            "command": self.command,
            "pose_after": {"x": self.pose_after[0], "y": self.pose_after[1],
                           "heading": self.pose_after[2]},
            "correct": self.correct,
            "failed": self.failed,
        }


@dataclass
class NavSession:
    world_name: str
    experiment: int
    trials: list = field(default_factory=list)
    completed: bool = False
    fault: str | None = None
    final_pose: tuple | None = None

    @property
    def accuracy(self) -> float:
        if not self.trials:
            return 0.0
        return sum(t.correct for t in self.trials) / len(self.trials)

    @property
    def mean_trial_s(self) -> float:
        if not self.trials:
            return FLICKER_DURATION_S
        return float(np.mean([FLICKER_DURATION_S + t.latency_s for t in self.trials]))

    @property
    def itr_bpm(self) -> float:
        return itr_bpm(bits_per_trial(3, self.accuracy), self.mean_trial_s / 60.0)

    def confusion(self) -> ConfusionMatrix:
        cm = ConfusionMatrix()
        for t in self.trials:
            cm.add(t.intended, t.decoded)
        return cm

    def summary(self) -> dict:
        return {
            "world": self.world_name,
            "experiment": self.experiment,
            "n_trials": len(self.trials),
            "accuracy": self.accuracy,
            "mean_trial_s": self.mean_trial_s,
            "itr_bpm": self.itr_bpm,
            "completed": self.completed,
            "fault": self.fault,
            "confusion": self.confusion().to_lists() if self.trials else None,
        }

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            for t in self.trials:
                fh.write(json.dumps(t.to_json()) + "\n")
            fh.write(json.dumps({"summary": self.summary()}) + "\n")


class SessionEngine:
    """One closed-loop experiment: owns the FSM, pose and trial log.

    Fixations are submitted one at a time (by a virtual subject or by the
    operator console); everything downstream of the fixation is identical
    for both paths.
    """

    def __init__(self, world: World, model: scu.ScuModel, gen_params: SsvepGenParams,
                 experiment: int = 0, step_params: StepParams = StepParams(),
                 trial_base: int = ONLINE_TRIAL_BASE, detector_noise=None):
        self.world = world
        self.model = model
        self.gen_params = gen_params
        self.step_params = step_params
        self.detector_noise = detector_noise
        self.filter_spec = design_bandpass()
        self.pose = world.start_pose
        self.session = NavSession(world_name=world.name, experiment=experiment)
        self._trial_counter = trial_base + experiment * 1000
        self.detections = []
        self.state = ObjectStimuli()
        self._refresh_stimuli()

    # -- presentation ---------------------------------------------------------

    def _refresh_stimuli(self) -> None:
        """Re-detect and pick the display mode for the next decision."""
        if isinstance(self.state, Done):
            self.detections = []
            return
        dets = assign_frequencies(detect_objects(self.world, self.pose,
                                                 noise=self.detector_noise))
        if isinstance(self.state, ObjectStimuli) and not dets:
            self.state = ArrowStimuli()
        elif isinstance(self.state, ArrowStimuli) and dets:
            # spec alternation: objects in view take precedence over arrows
            self.state = ObjectStimuli()
        self.detections = dets if isinstance(self.state, ObjectStimuli) else []

    @property
    def mode(self) -> str:
        return "arrow" if isinstance(self.state, ArrowStimuli) else "object"

    @property
    def finished(self) -> bool:
        return isinstance(self.state, Done) or self.session.fault is not None

    def displayed_stimuli(self) -> list:
        """The stimuli currently on screen: (class, object_id or None)."""
        if isinstance(self.state, ObjectStimuli):
            return [(d.stimulus, d.object_id) for d in self.detections
                    if d.stimulus is not None]
        if isinstance(self.state, ArrowStimuli):
            return [(cls, None) for cls in ALL_CLASSES]
        return []

    # -- one decision trial ---------------------------------------------------

    def submit_fixation(self, fixated: StimulusClass,
                        intended: StimulusClass | None = None) -> TrialRecord:
        """Run one trial: synthesize the fixated epoch, decode, act."""
        if self.finished:
            raise ParameterError("session is finished; no further trials accepted")
        displayed = self.displayed_stimuli()
        shown = [s for s, _ in displayed]
        if fixated not in shown:
            raise NoTargetError(f"no such stimulus on screen: {fixated.freq_hz} Hz")
        if intended is None:
            intended = fixated

        self._trial_counter += 1
        raw = generate_epoch(fixated, self.gen_params, self._trial_counter)
        filtered = apply_filter(self.filter_spec, raw)
        pred = scu.predict(self.model, filtered)
        decoded = pred.stimulus

        mode = self.mode
        command = "none"
        failed = False
        if mode == "object":
            target = self._target_for(decoded)
            try:
                self.state = nav_transition(self.state, Decoded(decoded, target))
                command = f"approach {self.state.target_id}"
                self._execute_walk()
            except NoTargetError:
                failed = True
                command = "no-target"
        else:
            self.state = nav_transition(self.state, Decoded(decoded))
            command = f"turn {self.state.turn}"
            self._execute_turn()

        record = TrialRecord(
            trial=len(self.session.trials),
            mode=mode,
            displayed=[{"freq_hz": s.freq_hz, "object_id": oid}
                       for s, oid in displayed],
            intended=intended,
            fixated=fixated,
            decoded=decoded,
            probabilities=list(pred.probabilities),
            latency_s=pred.latency_s,
            command=command,
            pose_after=(self.pose.x, self.pose.y, self.pose.heading),
            correct=decoded is intended,
            failed=failed,
        )
        self.session.trials.append(record)
        self.session.final_pose = record.pose_after
        return record

    def _target_for(self, decoded: StimulusClass):
        for det in self.detections:
            if det.stimulus is decoded:
                obj = self.world.find(det.object_id)
                z = estimate_distance(self.world.camera, obj.height_m,
                                      det.bbox.height_px)
                aov = angle_of_view(self.world.camera, det.bbox.center_x_px)
                return (det.object_id, z, aov)
        return None

    def _execute_walk(self) -> None:
        assert isinstance(self.state, WalkingToObject)
        # positive AoV = target right of axis = clockwise, so rotate by -aov
        try:
            poses = step_walk(self.pose, self.state.z, -self.state.aov,
                              self.step_params)
        except NavigationFault as exc:
            self.session.fault = str(exc)
            self.state = ArrowStimuli()
            self._refresh_stimuli()
            return
        self.pose = poses[-1]
        visible = bool(detect_objects(self.world, self.pose,
                                      noise=self.detector_noise))
        self.state = nav_transition(self.state, Arrived(objects_visible=visible))
        self._refresh_stimuli()

    def _execute_turn(self) -> None:
        assert isinstance(self.state, Turning)
        self.pose = apply_arrow(self.pose, TURN_CLASSES[self.state.turn])
        visible = bool(detect_objects(self.world, self.pose,
                                      noise=self.detector_noise))
        self.state = nav_transition(self.state, TurnComplete(objects_visible=visible))
        self._refresh_stimuli()

    def complete_plan(self) -> None:
        self.state = nav_transition(self.state, PlanComplete())
        self.session.completed = self.session.fault is None
        self.detections = []


def _intended_for_step(engine: SessionEngine, step) -> StimulusClass:
    """What the plan wants the subject to fixate, given the current display.

    Falls back deterministically (leftmost object stimulus / the left arrow)
    when earlier errors have desynchronized the plan from the display mode.
    """
    displayed = engine.displayed_stimuli()
    if engine.mode == "object":
        if step.kind == "object":
            for stim, oid in displayed:
                if oid == step.target_id:
                    return stim
        return displayed[0][0]
    if step.kind == "arrow":
        return TURN_CLASSES[step.turn]
    return StimulusClass.F10


def run_online_experiment(world: World, model: scu.ScuModel,
                          subject: VirtualSubject, plan=None,
                          experiment: int = 0,
                          step_params: StepParams = StepParams(),
                          detector_noise=None) -> NavSession:
    """Headless closed-loop run: the virtual subject works through the plan."""
    plan = list(plan if plan is not None else world.plan)
    if not plan:
        raise ParameterError("navigation plan is empty")
    for step in plan:
        if step.kind == "object" and world.find(step.target_id) is None:
            raise ParameterError(f"plan targets unknown object {step.target_id!r}")
    engine = SessionEngine(world, model, subject.gen_params,
                           experiment=experiment, step_params=step_params,
                           detector_noise=detector_noise)
    for step in plan:
        if engine.finished:
            break
        displayed = engine.displayed_stimuli()
        if not displayed:
            engine.session.fault = "no stimuli to display"
            break
        intended = _intended_for_step(engine, step)
        fixated = subject.choose_fixation(intended, [s for s, _ in displayed])
        engine.submit_fixation(fixated, intended=intended)
    if engine.session.fault is None:
        engine.complete_plan()
    return engine.session


def run_repeated_experiments(world: World, model: scu.ScuModel,
                             subject_factory, repeats: int = 5,
                             out_dir=None) -> list:
    """Repeat the episode, one fresh subject per run; optionally persist logs."""
    sessions = []
    for i in range(repeats):
        session = run_online_experiment(world, model, subject_factory(i),
                                        experiment=i)
        sessions.append(session)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            session.write_log(out / f"session{i + 1}.log")
    return sessions
