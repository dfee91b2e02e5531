"""Batch experiment runs: config, worker pool, prediction/trace files, run manifest."""
from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .backend import (
    API_BASE_ENV,
    API_KEY_ENV,
    DEFAULT_MAX_IN_FLIGHT,
    DEFAULT_PATH,
    DEFAULT_TEMPERATURE,
    Backend,
    OpenAIBackend,
    ResponseCache,
    load_mock_script,
)
from .dataset import Split, load_dataset, select_exemplars, write_jsonl, write_predictions
from .errors import BudgetExceeded, ConfigError, PipelineError
from .pipeline import AgentTrace, Setting, run_dialogue
from .prompts import NON_VERBATIM, TEMPLATE_VERSION
from .schema import Label

log = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.jsonl"
TRACES_FILE = "traces.jsonl"
SUMMARY_FILE = "run_summary.json"
MANIFEST_FILE = "run_manifest.json"


@dataclass
class ExperimentConfig:
    setting: str = Setting.CLAIM.value
    dataset: str = ""
    output_dir: str = "runs/latest"
    backend: str = "openai"
    model: str = ""
    base_url: str | None = None
    api_path: str = DEFAULT_PATH
    mock_script: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None
    split: str | None = None
    partition: str = "test"
    exemplar_ids: list[str] = field(default_factory=list)
    cache: str | None = None
    concurrency: int = DEFAULT_MAX_IN_FLIGHT
    budget: int | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**dict(data))

    @classmethod
    def load(cls, path: str | os.PathLike[str], overrides: Mapping[str, Any] | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def validate(self) -> None:
        try:
            setting = Setting(self.setting)
        except ValueError:
            raise ConfigError(
                f"unknown setting {self.setting!r}; choose from {[s.value for s in Setting]}"
            ) from None
        if not self.dataset:
            raise ConfigError("a dataset path is required")
        if setting is Setting.FEW_SHOT:
            if len(self.exemplar_ids) != 5:
                raise ConfigError("few-shot runs need exactly 5 exemplar ids")
            if not self.split:
                raise ConfigError("few-shot runs need a split manifest to guard against exemplar leakage")
        if self.backend == "mock":
            if not self.mock_script:
                raise ConfigError("the mock backend needs a mock_script path")
        elif self.backend == "openai":
            if not self.model:
                raise ConfigError("the openai backend needs a model name")
            if not (self.base_url or os.environ.get(API_BASE_ENV)):
                raise ConfigError(f"no endpoint: set base_url or {API_BASE_ENV}")
        else:
            raise ConfigError(f"unknown backend {self.backend!r}; expected 'openai' or 'mock'")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be non-negative")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be in [0, 2]")


def build_backend(cfg: ExperimentConfig) -> Backend:
    cache = ResponseCache(cfg.cache) if cfg.cache else None
    common = {"cache": cache, "max_requests": cfg.budget, "max_in_flight": cfg.concurrency}
    if cfg.backend == "mock":
        assert cfg.mock_script
        return load_mock_script(cfg.mock_script, model=cfg.model or "mock", **common)
    base = cfg.base_url or os.environ[API_BASE_ENV]
    return OpenAIBackend(base, cfg.model, api_key=os.environ.get(API_KEY_ENV), path=cfg.api_path, **common)


@dataclass
class RunResult:
    predictions: dict[str, Label]
    traces: dict[str, AgentTrace]
    failures: dict[str, str]
    skipped: list[str]
    aborted: bool
    backend_calls: int
    cache_hits: int

    def summary(self) -> dict[str, Any]:
        return {
            "predicted": len(self.predictions),
            "failed": len(self.failures),
            "skipped": len(self.skipped),
            "aborted": self.aborted,
            "backend_calls": self.backend_calls,
            "cache_hits": self.cache_hits,
            "failures": dict(sorted(self.failures.items())),
            "skipped_ids": sorted(self.skipped),
        }


def run_experiment(cfg: ExperimentConfig, backend: Backend | None = None) -> RunResult:
    """Run one setting over the selected partition and write all outputs.

    Outputs in ``cfg.output_dir``: predictions, traces (including failed
    runs), a run summary and a manifest with the resolved ids, template
    version and cache digest. Rows are ordered by dialogue id.
    """
    cfg.validate()
    setting = Setting(cfg.setting)
    ds = load_dataset(cfg.dataset)
    split = Split.load(cfg.split) if cfg.split else None
    if split is not None:
        ids = sorted(split.partition(cfg.partition))
        missing = [i for i in ids if i not in ds]
        if missing:
            raise ConfigError(f"split ids missing from dataset: {', '.join(missing[:5])}")
    else:
        ids = sorted(ds.ids)
    exemplars = select_exemplars(ds, cfg.exemplar_ids, split) if setting is Setting.FEW_SHOT and split else None

    backend = backend or build_backend(cfg)
    abort = threading.Event()

    def work(dialogue_id: str):
        if abort.is_set():
            return dialogue_id, None, None, "skipped"
        d = ds[dialogue_id].dialogue
        try:
            label, trace = run_dialogue(
                d, backend, setting, exemplars,
                model=cfg.model or None, temperature=cfg.temperature, max_tokens=cfg.max_tokens,
            )
            return dialogue_id, label, trace, None
        except BudgetExceeded:
            abort.set()
            return dialogue_id, None, None, "skipped"
        except PipelineError as exc:
            if isinstance(exc.cause, BudgetExceeded):
                abort.set()
                return dialogue_id, None, None, "skipped"
            log.warning("%s failed: %s", dialogue_id, exc)
            return dialogue_id, None, exc.trace, f"{type(exc.cause or exc).__name__}: {exc.cause or exc}"

    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        outcomes = list(pool.map(work, ids))

    result = RunResult({}, {}, {}, [], abort.is_set(), backend.calls, backend.cache_hits)
    for dialogue_id, label, trace, err in outcomes:
        if err == "skipped":
            result.skipped.append(dialogue_id)
            continue
        if trace is not None:
            result.traces[dialogue_id] = trace
        if err is not None:
            result.failures[dialogue_id] = err
        elif label is not None:
            result.predictions[dialogue_id] = label

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / PREDICTIONS_FILE, result.predictions)
    write_jsonl(out / TRACES_FILE, (result.traces[i].to_dict() for i in sorted(result.traces)))
    (out / SUMMARY_FILE).write_text(json.dumps(result.summary(), indent=2) + "\n", encoding="utf-8")
    manifest = {
        "config": cfg.to_dict(),
        "setting": setting.value,
        "backend_id": backend.backend_id,
        "partition": cfg.partition if split else "all",
        "split_seed": split.seed if split else None,
        "ids": ids,
        "exemplar_ids": [e.dialogue.id for e in exemplars] if exemplars else [],
        "template_version": TEMPLATE_VERSION,
        "non_verbatim_templates": {k.value: v for k, v in NON_VERBATIM.items()},
        "cache_digest": backend.cache.digest() if backend.cache else None,
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return result
