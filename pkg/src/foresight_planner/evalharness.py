"""Atomic-action scoring and the multi-configuration suite runner.

A trial's score is the fraction of atomic actions ("approach and grasp",
"move and place") completed, less one atomic action's worth for every
undesired grasp, floored at zero.

Tracking rules over the edge loop's step log:

* the active atomic action is the first one not yet resolved;
* an attempt is one action chunk that touches the active atomic's target
  (the gripper reaches its cell or holds it); after 5 unsuccessful
  attempts the atomic fails and the next one becomes active;
* a grasp on any object other than the active atomic's object is undesired;
* a ruin happens when an object no atomic action refers to ends up inside
  a region; every atomic still unresolved is then voided.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from statistics import fmean
from typing import Callable, Optional, Sequence

from .edgecloud.edge import ABLATIONS, EpisodeResult, InProcessTransport, LoopConfig, StepRecord, run_edge_loop
from .edgecloud.service import GuidanceService
from .foresight import InputError, OracleForesight
from .gridworld.grammar import InfeasibleError
from .gridworld.policies import GoalImagePolicy, GroundingTable, TextPolicy
from .gridworld.scenario import AtomicActionSpec, ScenarioSpec
from .gridworld.scene import Scene

log = logging.getLogger(__name__)

MAX_TRIALS = 5
MIN_SETTINGS = 5

SUCCESS = "Success"
FAILED = "FailedAfterTrials"
VOIDED = "VoidedByRuin"


@dataclass(frozen=True)
class AtomicOutcome:
    status: str
    trials: int = 0

    def __post_init__(self):
        if self.status not in (SUCCESS, FAILED, VOIDED):
            raise ValueError(f"unknown atomic outcome {self.status!r}")
        if not 0 <= self.trials <= MAX_TRIALS:
            raise ValueError(f"trial count {self.trials} outside 0..{MAX_TRIALS}")

    def __str__(self) -> str:
        return f"{FAILED}({self.trials})" if self.status == FAILED else self.status


@dataclass(frozen=True)
class TrialLog:
    scenario: str
    configuration: str
    setting: int
    outcomes: tuple[AtomicOutcome, ...]
    undesired_count: int = 0
    ruined: bool = False
    termination: str = ""

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "configuration": self.configuration,
            "setting": self.setting,
            "outcomes": [str(o) for o in self.outcomes],
            "undesired_count": self.undesired_count,
            "ruined": self.ruined,
            "termination": self.termination,
            "score": score_trial(self),
        }


def score_trial(log: TrialLog) -> float:
    if not log.outcomes:
        return 0.0
    successes = sum(o.status == SUCCESS for o in log.outcomes)
    return max(0.0, (successes - log.undesired_count) / len(log.outcomes))


def grasped(before: Scene, after: Scene) -> Optional[str]:
    """Id of the object picked up by this transition, if any."""
    if before.holding is None and after.holding is not None:
        return after.holding
    return None


def detect_undesired(before: Scene, after: Scene, atomic: Optional[AtomicActionSpec]) -> bool:
    obj = grasped(before, after)
    if obj is None:
        return False
    return atomic is None or obj != atomic.object_id


def _achieved(scene: Scene, atomic: AtomicActionSpec) -> bool:
    if atomic.kind == "approach_grasp":
        return scene.holding == atomic.object_id
    cell = scene.object(atomic.object_id).cell
    return cell is not None and cell in scene.region(atomic.region_id).cells


def _touches(scene: Scene, atomic: AtomicActionSpec) -> bool:
    if scene.holding == atomic.object_id:
        return True
    return scene.object(atomic.object_id).cell == scene.gripper


def _ruined(initial: Scene, scene: Scene, task_objects: set) -> bool:
    for o in scene.objects:
        if o.id in task_objects or o.cell is None:
            continue
        if o.cell != initial.object(o.id).cell and scene.regions_at(o.cell):
            return True
    return False


def track_atomics(spec: ScenarioSpec, steps: Sequence[StepRecord], configuration: str = "",
                  setting: int = 0, termination: str = "") -> TrialLog:
    """Derive the trial log from an edge-loop step log."""
    atomics = spec.atomic_actions
    task_objects = {a.object_id for a in atomics}
    outcomes: list[Optional[AtomicOutcome]] = [None] * len(atomics)
    attempts = [0] * len(atomics)
    active = 0
    undesired = 0
    ruined = False

    for _, chunk_steps in groupby(steps, key=lambda s: s.chunk_index):
        if ruined:
            break
        touched = False
        chunk_active = active
        for rec in chunk_steps:
            atomic = atomics[active] if active < len(atomics) else None
            if detect_undesired(rec.before, rec.after, atomic):
                undesired += 1
            if atomic is not None and _touches(rec.after, atomic) and active == chunk_active:
                touched = True
            while active < len(atomics) and _achieved(rec.after, atomics[active]):
                outcomes[active] = AtomicOutcome(SUCCESS, min(attempts[active] + 1, MAX_TRIALS))
                active += 1
            if _ruined(spec.scene, rec.after, task_objects):
                ruined = True
                break
        if active == chunk_active and active < len(atomics) and touched:
            attempts[active] += 1
            if attempts[active] >= MAX_TRIALS:
                outcomes[active] = AtomicOutcome(FAILED, MAX_TRIALS)
                active += 1

    for i in range(len(atomics)):
        if outcomes[i] is None:
            outcomes[i] = AtomicOutcome(VOIDED) if ruined else AtomicOutcome(FAILED, attempts[i])
    return TrialLog(spec.name, configuration, setting, tuple(outcomes), undesired, ruined, termination)


# -- suite runner ------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    name: str
    loop: LoopConfig
    make_policy: Callable[[GroundingTable], object]


def _goal_policy(grounding: GroundingTable):
    return GoalImagePolicy()


def _text_policy(grounding: GroundingTable):
    return TextPolicy(grounding)


CONFIGURATIONS = {
    "full": Configuration("full", ABLATIONS["full"], _goal_policy),
    "text-only": Configuration("text-only", ABLATIONS["text-only"], _text_policy),
    "task-only": Configuration("task-only", ABLATIONS["task-only"], _text_policy),
}


@dataclass
class ScoreCard:
    trials: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def _scores(self, pred) -> list[float]:
        return [score_trial(t) for t in self.trials if pred(t)]

    def configurations(self) -> list[str]:
        return list(dict.fromkeys(t.configuration for t in self.trials))

    def scenarios(self) -> list[str]:
        return list(dict.fromkeys(t.scenario for t in self.trials))

    def scenario_mean(self, scenario: str, configuration: str) -> float:
        return fmean(self._scores(lambda t: t.scenario == scenario and t.configuration == configuration))

    def configuration_mean(self, configuration: str) -> float:
        return fmean(self._scores(lambda t: t.configuration == configuration))

    def tag_mean(self, tag: str, configuration: str, tags: dict) -> Optional[float]:
        scores = self._scores(lambda t: t.configuration == configuration and tag in tags.get(t.scenario, ()))
        return fmean(scores) if scores else None


@dataclass
class SuiteReport:
    card: ScoreCard
    tags: dict  # scenario name -> frozenset of OOD tags
    results: dict = field(default_factory=dict)  # (scenario, setting, configuration) -> EpisodeResult

    def tag_mean(self, tag: str, configuration: str) -> Optional[float]:
        return self.card.tag_mean(tag, configuration, self.tags)

    def format(self) -> str:
        card = self.card
        configs = card.configurations()
        lines = ["scenario," + ",".join(configs)]
        for name in card.scenarios():
            lines.append(name + "," + ",".join(f"{card.scenario_mean(name, c):.4f}" for c in configs))
        lines.append("mean," + ",".join(f"{card.configuration_mean(c):.4f}" for c in configs))
        lines.append("")
        lines.append("ood_tag," + ",".join(configs))
        for tag in ("Spatial", "Comp", "Joint"):
            vals = [self.tag_mean(tag, c) for c in configs]
            if all(v is None for v in vals):
                continue
            lines.append(tag + "," + ",".join("n/a" if v is None else f"{v:.4f}" for v in vals))
        for name, reason in card.excluded:
            lines.append(f"# excluded {name}: {reason}")
        return "\n".join(lines) + "\n"

    def write_records(self, path) -> None:
        with open(path, "w") as f:
            for t in self.card.trials:
                f.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")


def run_trial(spec: ScenarioSpec, configuration: Configuration, grounding: GroundingTable,
              setting: int = 0, seed: int = 0, service: Optional[GuidanceService] = None) -> tuple[TrialLog, EpisodeResult]:
    variant = spec.variant(setting, seed)
    if service is None:
        service = GuidanceService(foresight=OracleForesight(), seed=seed)
    result = run_edge_loop(variant.scene, variant.task, configuration.make_policy(grounding),
                           InProcessTransport(service), configuration.loop, session_id=setting + 1)
    log_ = track_atomics(variant, result.steps, configuration.name, setting, result.termination.value)
    return log_, result


def run_suite(scenarios: Sequence[ScenarioSpec], configurations: Sequence[str] = tuple(CONFIGURATIONS),
              settings_per_scenario: int = MIN_SETTINGS, seed: int = 0,
              grounding: Optional[GroundingTable] = None) -> SuiteReport:
    if settings_per_scenario < MIN_SETTINGS:
        raise InputError(f"at least {MIN_SETTINGS} initial settings per scenario are required")
    unknown = [c for c in configurations if c not in CONFIGURATIONS]
    if unknown:
        raise InputError(f"unknown configurations {unknown}; choose from {sorted(CONFIGURATIONS)}")
    grounding = grounding if grounding is not None else GroundingTable()
    service = GuidanceService(foresight=OracleForesight(), seed=seed)
    card = ScoreCard()
    report = SuiteReport(card, {s.name: s.ood_tags for s in scenarios})
    for spec in scenarios:
        variants = []
        try:
            for k in range(settings_per_scenario):
                v = spec.variant(k, seed)
                v.check_feasible()
                variants.append(v)
        except InfeasibleError as exc:
            log.warning("excluding infeasible scenario %s: %s", spec.name, exc)
            card.excluded.append((spec.name, str(exc)))
            continue
        for k in range(settings_per_scenario):
            for cname in configurations:
                trial, result = run_trial(spec, CONFIGURATIONS[cname], grounding, k, seed, service)
                card.trials.append(trial)
                report.results[(spec.name, k, cname)] = result
    return report


def write_report(report: SuiteReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "suite_report.csv"
    table.write_text(report.format())
    records = out / "trials.jsonl"
    report.write_records(records)
    return table, records
