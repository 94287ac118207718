"""Instance construction and scenario/profile files.

Scenario files are JSON with explicit units in every field name::

    {
      "format": "chainalloc-scenario/1",
      "weights": {"alpha_cpu": 0.333.., "alpha_mem": .., "alpha_gpu": ..,
                  "beta_utilization": 0.5, "beta_bandwidth": 0.5},
      "nodes": [{"count": 8, "cpu_mhz": 2900, "mem_gb": 96, "gpu_units": 8, "bw_mbps": 1000}],
      "tasks": [{"count": 8, "name": "communication",
                 "subtasks": [{"name": "network_receiving", "cpu_mhz": 290, "mem_gb": 9.6,
                               "gpu_units": 0, "bw_mbps": 100, "predecessors": []}, ...]}]
    }

``count`` expands a run of identical entries and may be omitted (defaults to 1).
``predecessors`` lists in-task sub-task indices.  Profile library files hold
``{"format": "chainalloc-profiles/1", "profiles": {name: [subtask, ...]}}`` with
the same sub-task fields (predecessors optional, chain by default).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .model import InstanceError, ObjectiveWeights, ResourceVector, Scenario, TaskSpec

SCENARIO_FORMAT = "chainalloc-scenario/1"
PROFILE_FORMAT = "chainalloc-profiles/1"
UNIT_FIELDS = ("cpu_mhz", "mem_gb", "gpu_units", "bw_mbps")

STANDARD_NODE = ResourceVector(2900.0, 96.0, 8.0, 1000.0)


class ScenarioFormatError(InstanceError):
    """Malformed scenario, profile or stream file."""


@dataclass(frozen=True)
class TaskProfile:
    name: str
    subtasks: tuple[tuple[str, ResourceVector], ...]
    predecessors: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if not self.subtasks:
            raise InstanceError(f"profile {self.name!r} is empty")

    def task(self) -> TaskSpec:
        return TaskSpec(
            demands=tuple(d for _, d in self.subtasks),
            predecessors=self.predecessors,
            name=self.name,
            subtask_names=tuple(n for n, _ in self.subtasks),
        )


def standard_profile() -> TaskProfile:
    """The five-stage communication task (receiving -> capture -> tracking ->
    synchronization -> decoding)."""
    return TaskProfile(
        "communication",
        (
            ("network_receiving", ResourceVector(290, 9.6, 0, 100)),
            ("capture", ResourceVector(319, 11.52, 1, 97)),
            ("tracking", ResourceVector(435, 12.48, 1, 95)),
            ("synchronization", ResourceVector(638, 12.48, 1, 92)),
            ("decoding", ResourceVector(145, 4.8, 1, 90)),
        ),
    )


def make_scenario(L: int, K: int, profile: TaskProfile | None = None,
                  weights: ObjectiveWeights | None = None,
                  node: ResourceVector = STANDARD_NODE) -> Scenario:
    """``L`` copies of ``profile`` over ``K`` identical nodes."""
    if L < 1 or K < 1:
        raise InstanceError("need L >= 1 and K >= 1")
    task = (profile or standard_profile()).task()
    return Scenario(nodes=(node,) * K, tasks=(task,) * L, weights=weights or ObjectiveWeights())


# --------------------------------------------------------------------------
# serialisation


def _num(v: float):
    v = float(v)
    return int(v) if v.is_integer() else v


def _vector_fields(v: ResourceVector) -> dict:
    return {f: _num(x) for f, x in zip(UNIT_FIELDS, v)}


def _runs(items):
    out: list[list] = []
    for item in items:
        if out and out[-1][0] == item:
            out[-1][1] += 1
        else:
            out.append([item, 1])
    return out


def _task_record(task: TaskSpec) -> dict:
    names = task.subtask_names or tuple(f"s{k}" for k in range(len(task)))
    subs = []
    for name, d, ps in zip(names, task.demands, task.predecessors):
        rec = {"name": name}
        rec.update(_vector_fields(d))
        rec["predecessors"] = list(ps)
        subs.append(rec)
    return {"name": task.name, "subtasks": subs}


def scenario_to_dict(s: Scenario) -> dict:
    w = s.weights
    nodes = []
    for cap, n in _runs(s.nodes):
        rec = {"count": n}
        rec.update(_vector_fields(cap))
        nodes.append(rec)
    tasks = []
    for task, n in _runs(s.tasks):
        rec = {"count": n}
        rec.update(_task_record(task))
        tasks.append(rec)
    return {
        "format": SCENARIO_FORMAT,
        "weights": {
            "alpha_cpu": w.alpha_c,
            "alpha_mem": w.alpha_m,
            "alpha_gpu": w.alpha_g,
            "beta_utilization": w.beta_1,
            "beta_bandwidth": w.beta_2,
        },
        "nodes": nodes,
        "tasks": tasks,
    }


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise ScenarioFormatError(f"{self.source}: {where}: {msg}")

    def obj(self, value, where: str) -> dict:
        if not isinstance(value, dict):
            self.fail(where, "expected an object")
        return value

    def lst(self, value, where: str) -> list:
        if not isinstance(value, list):
            self.fail(where, "expected a list")
        return value

    def number(self, rec: dict, key: str, where: str) -> float:
        if key not in rec:
            self.fail(f"{where}.{key}", "missing field")
        v = rec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where}.{key}", f"expected a number, got {v!r}")
        if v < 0:
            self.fail(f"{where}.{key}", "must be >= 0")
        return float(v)

    def count(self, rec: dict, where: str) -> int:
        n = rec.get("count", 1)
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            self.fail(f"{where}.count", f"expected a positive integer, got {n!r}")
        return n

    def vector(self, rec: dict, where: str) -> ResourceVector:
        return ResourceVector(*(self.number(rec, f, where) for f in UNIT_FIELDS))

    def subtasks(self, subs, where: str):
        subs = self.lst(subs, where)
        if not subs:
            self.fail(where, "no sub-tasks")
        named, preds = [], []
        explicit = False
        for k, sub in enumerate(subs):
            w = f"{where}[{k}]"
            sub = self.obj(sub, w)
            named.append((str(sub.get("name", f"s{k}")), self.vector(sub, w)))
            if "predecessors" in sub:
                explicit = True
                ps = self.lst(sub["predecessors"], f"{w}.predecessors")
                if not all(isinstance(p, int) and not isinstance(p, bool) for p in ps):
                    self.fail(f"{w}.predecessors", "expected integer indices")
                preds.append(tuple(ps))
            else:
                preds.append(() if k == 0 else (k - 1,))
        return tuple(named), (tuple(preds) if explicit else None)


def _parse_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def scenario_from_dict(data, source: str = "<scenario>") -> Scenario:
    r = _Reader(source)
    data = r.obj(data, "top level")
    if data.get("format") != SCENARIO_FORMAT:
        r.fail("format", f"expected {SCENARIO_FORMAT!r}, got {data.get('format')!r}")
    wrec = r.obj(data.get("weights"), "weights")
    try:
        weights = ObjectiveWeights(
            alpha_c=r.number(wrec, "alpha_cpu", "weights"),
            alpha_m=r.number(wrec, "alpha_mem", "weights"),
            alpha_g=r.number(wrec, "alpha_gpu", "weights"),
            beta_1=r.number(wrec, "beta_utilization", "weights"),
            beta_2=r.number(wrec, "beta_bandwidth", "weights"),
        )
    except ScenarioFormatError:
        raise
    except InstanceError as exc:
        r.fail("weights", str(exc))
    nodes = []
    for k, rec in enumerate(r.lst(data.get("nodes"), "nodes")):
        w = f"nodes[{k}]"
        rec = r.obj(rec, w)
        nodes.extend([r.vector(rec, w)] * r.count(rec, w))
    tasks = []
    for k, rec in enumerate(r.lst(data.get("tasks"), "tasks")):
        w = f"tasks[{k}]"
        rec = r.obj(rec, w)
        named, preds = r.subtasks(rec.get("subtasks"), f"{w}.subtasks")
        try:
            task = TaskProfile(str(rec.get("name", "task")), named, preds).task()
        except InstanceError as exc:
            r.fail(w, str(exc))
        tasks.extend([task] * r.count(rec, w))
    try:
        return Scenario(nodes=tuple(nodes), tasks=tuple(tasks), weights=weights)
    except ScenarioFormatError:
        raise
    except InstanceError as exc:
        r.fail("scenario", str(exc))


def loads_scenario(text: str, source: str = "<scenario>") -> Scenario:
    return scenario_from_dict(_parse_json(text, source), source)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(encoding="utf-8"), str(path))


def dumps_profiles(profiles: dict[str, TaskProfile]) -> str:
    out = {}
    for key, prof in profiles.items():
        preds = prof.predecessors
        subs = []
        for k, (name, d) in enumerate(prof.subtasks):
            rec = {"name": name}
            rec.update(_vector_fields(d))
            if preds is not None:
                rec["predecessors"] = list(preds[k])
            subs.append(rec)
        out[key] = subs
    return json.dumps({"format": PROFILE_FORMAT, "profiles": out}, indent=2) + "\n"


def loads_profiles(text: str, source: str = "<profiles>") -> dict[str, TaskProfile]:
    r = _Reader(source)
    data = r.obj(_parse_json(text, source), "top level")
    if data.get("format") != PROFILE_FORMAT:
        r.fail("format", f"expected {PROFILE_FORMAT!r}, got {data.get('format')!r}")
    out = {}
    for key, subs in r.obj(data.get("profiles"), "profiles").items():
        named, preds = r.subtasks(subs, f"profiles.{key}")
        try:
            out[key] = TaskProfile(key, named, preds)
            out[key].task()
        except InstanceError as exc:
            r.fail(f"profiles.{key}", str(exc))
    return out


def load_profiles(path: str | Path) -> dict[str, TaskProfile]:
    path = Path(path)
    return loads_profiles(path.read_text(encoding="utf-8"), str(path))


def builtin_profiles() -> dict[str, TaskProfile]:
    return {"standard": standard_profile()}
