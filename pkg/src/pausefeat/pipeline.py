"""Configuration, staged execution and the artifact cache.

Stages run in a fixed order (synth, extract, guide, features, classify,
report).  Each cached stage is keyed by a digest of the configuration keys
and upstream keys it depends on, so editing an upstream setting forces every
dependent stage to recompute.  Cache entries hold plain payloads; published
copies under ``<out>/<stage>/`` additionally carry the tool version and the
resolved configuration hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .classify import ALL, ClassifierParams
from .corpus import ChatParseError, Corpus, ParseConfig, PauseMarkers, dumps_corpus, load_corpus, loads_corpus
from .cv import default_workers
from .evaluation import (TranscriptConfig, distances_for, guide_aggregates, run_subsequence_cv, run_transcript_cv,
                         significance_analysis)
from .features import FeatureTable, build_feature_table, load_info_units
from .lexicon import (LEXICON_SLOTS, LexiconTagger, Lexicons, PretaggedTagger, annotate_corpus, load_lexicons)
from .seqmodel.model import ModelConfig
from .seqmodel.search import SearchConfig, encode_subset, model_grid
from .seqmodel.train import TrainConfig
from .subseq import Context, build_subsets, dumps_subset, loads_subset, subset_counts_table
from .synthetic import SyntheticError, SyntheticSpec, generate_synthetic, synthetic_files

log = logging.getLogger(__name__)

TOOL = "pausefeat"
PROFILES = ("default", "desk")
STAGES = ("synth", "extract", "guide", "features", "classify", "report")
_PATH_KEYS = {("corpus", "transcripts"), ("corpus", "metadata"), ("features", "info_units")} | {
    ("lexicons", s) for s in LEXICON_SLOTS
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(RuntimeError):
    """Unreadable or malformed input data (CLI exit code 3)."""


# --- configuration ---------------------------------------------------------------------


def _bundled_profile(name: str) -> dict:
    text = (resources.files("pausefeat") / "data" / f"{name}.toml").read_text(encoding="utf-8")
    return tomllib.loads(text)


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_paths(layer: dict, base: Path) -> dict:
    layer = copy.deepcopy(layer)

    def fix(p):
        return str((base / p).resolve()) if isinstance(p, str) and p else p

    for section, key in _PATH_KEYS:
        if isinstance(layer.get(section), dict) and key in layer[section]:
            layer[section][key] = fix(layer[section][key])
    corpus = layer.get("corpus")
    if isinstance(corpus, dict) and isinstance(corpus.get("tagdicts"), list):
        corpus["tagdicts"] = [fix(p) for p in corpus["tagdicts"]]
    return layer


def _same_kind(default, value) -> bool:
    if isinstance(default, bool) or isinstance(value, bool):
        return isinstance(default, bool) and isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float))
    return isinstance(value, type(default))


def merge_config(base: dict, layer: Mapping, where: str = "") -> dict:
    """Overlay ``layer`` on ``base``; unknown keys and type changes are errors."""
    out = copy.deepcopy(base)
    for key, value in layer.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {name!r} must be a table")
            out[key] = merge_config(base[key], value, f"{name}.")
        elif not _same_kind(base[key], value):
            raise ConfigError(f"config key {name!r} expects {type(base[key]).__name__}, got {type(value).__name__}")
        else:
            out[key] = copy.deepcopy(value)
    return out


def digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _file_digest(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


class PipelineConfig:
    """Resolved configuration: bundled defaults overlaid by a profile or file and CLI overrides."""

    def __init__(self, data: dict):
        self.data = data
        self.validate()

    # derived objects

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.data["seeds"])

    @property
    def workers(self) -> int:
        return self.data["workers"] or default_workers()

    @property
    def synthetic(self) -> bool:
        return self.data["corpus"]["source"] == "synthetic"

    def parse_config(self) -> ParseConfig:
        c = self.data["corpus"]
        m = c["markers"]
        markers = PauseMarkers(tuple(m["filled_prefixes"]), tuple(m["literal_fillers"]), tuple(m["unfilled"]),
                               m["use_filled"], m["use_unfilled"])
        return ParseConfig(tuple(c["speakers"]), markers, c["pretagged"])

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec.from_dict(self.data["synthetic"])

    @property
    def contexts(self) -> tuple[Context, ...]:
        return tuple(Context(c) for c in self.data["subsets"]["contexts"])

    def grid_indices(self) -> list[int]:
        chosen = self.data["subsequence"]["grid"]
        return list(chosen) if chosen else list(range(24))

    def grid(self) -> list[ModelConfig]:
        s = self.data["subsequence"]
        sizes = {"small": (s["small_gru"], tuple(s["small_ffn"])), "large": (s["large_gru"], tuple(s["large_ffn"]))}
        full = model_grid(sizes)
        return [full[i] for i in self.grid_indices()]

    def search_config(self) -> SearchConfig:
        s = self.data["subsequence"]
        train = TrainConfig(**{k: v for k, v in s["train"].items()})
        return SearchConfig(s["n_folds"], self.seeds, s["group_by_source"], s["global_norm"],
                            float(s["specificity_gate"]), train, self.workers)

    def classifier_params(self) -> ClassifierParams:
        c = dict(self.data["transcript"]["classifiers"])
        c["svm_gamma"] = float(c["svm_gamma"]) or None
        return ClassifierParams(**c)

    def transcript_config(self) -> TranscriptConfig:
        t = self.data["transcript"]
        return TranscriptConfig(t["n_folds"], self.seeds, t["group_by_participant"], tuple(t["extending_k_grid"]),
                                tuple(t["original_k_grid"]), tuple(t["smote"]), self.classifier_params(),
                                self.workers)

    # validation and identity

    def validate(self) -> None:
        d = self.data
        try:
            if d["corpus"]["source"] not in ("synthetic", "chat"):
                raise ConfigError("corpus.source must be 'synthetic' or 'chat'")
            if not self.synthetic and not (d["corpus"]["transcripts"] and d["corpus"]["metadata"]):
                raise ConfigError("corpus.source = 'chat' needs corpus.transcripts and corpus.metadata")
            if not d["seeds"] or not all(isinstance(s, int) and not isinstance(s, bool) for s in d["seeds"]):
                raise ConfigError("seeds must be a non-empty list of integers")
            if len(set(d["seeds"])) != len(d["seeds"]):
                raise ConfigError("seeds must be distinct")
            if not isinstance(d["workers"], int) or d["workers"] < 0:
                raise ConfigError("workers must be a non-negative integer")
            if not self.contexts:
                raise ConfigError("subsets.contexts is empty")
            if not all(isinstance(i, int) and 0 <= i < 24 for i in self.grid_indices()):
                raise ConfigError("subsequence.grid holds indices outside 0..23")
            for name in ("extending_k_grid", "original_k_grid"):
                grid = d["transcript"][name]
                if not grid or not all(k == ALL or (isinstance(k, int) and k >= 1) for k in grid):
                    raise ConfigError(f"transcript.{name} entries must be positive integers or 'ALL'")
            if not d["transcript"]["smote"]:
                raise ConfigError("transcript.smote must list at least one option")
            if d["lexicons"]["frequency_transform"] not in ("log1p", "identity"):
                raise ConfigError("lexicons.frequency_transform must be 'log1p' or 'identity'")
            for name in ("n_folds",):
                if d["subsequence"][name] < 2 or d["transcript"][name] < 2:
                    raise ConfigError("n_folds must be at least 2")
            self.parse_config()
            self.synthetic_spec()
            self.grid()
            self.search_config()
            self.transcript_config()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def hash(self) -> str:
        return digest({k: v for k, v in self.data.items() if k != "workers"})

    def section(self, *path: str):
        node = self.data
        for p in path:
            node = node[p]
        return node

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_config(path: str | Path | None = None, overrides: Optional[Mapping] = None) -> PipelineConfig:
    """Defaults, then a bundled profile name or a TOML/JSON file, then ``overrides``."""
    data = _bundled_profile("default")
    if path is not None:
        if str(path) in PROFILES:
            layer = _bundled_profile(str(path))
        else:
            layer = _resolve_paths(read_config_file(path), Path(path).resolve().parent)
        data = merge_config(data, layer)
    if overrides:
        data = merge_config(data, _resolve_paths(dict(overrides), Path.cwd()))
    return PipelineConfig(data)


# --- artifact store ----------------------------------------------------------------------


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header_line(config_hash: str) -> str:
    return f"{TOOL} {__version__} config={config_hash}"


def with_header(rel: str, text: str, config_hash: str) -> str:
    """Stamp a payload with the tool version and config hash in a format-appropriate way."""
    meta = {"tool": TOOL, "version": __version__, "config_hash": config_hash}
    if rel.endswith(".json"):
        return json.dumps({"_meta": meta, **json.loads(text)}, indent=2, ensure_ascii=False) + "\n"
    if rel.endswith(".jsonl"):
        return json.dumps({"_meta": meta}) + "\n" + text
    if rel.endswith(".cha"):
        head, sep, rest = text.partition("@Begin\n")
        return f"{head}{sep}@Comment:\t{header_line(config_hash)}\n{rest}" if sep else text
    return f"# {header_line(config_hash)}\n{text}"


def strip_header(text: str) -> str:
    """Inverse of the CSV-style header; other formats are read with their own loaders."""
    if text.startswith(f"# {TOOL} "):
        return text.split("\n", 1)[1]
    return text


class ArtifactStore:
    def __init__(self, out_dir: str | Path, config_hash: str):
        self.out = Path(out_dir)
        self.config_hash = config_hash

    def entry(self, stage: str, key: str) -> Path:
        return self.out / "cache" / stage / key

    def load(self, stage: str, key: str) -> Optional[dict[str, str]]:
        d = self.entry(stage, key)
        if not (d / ".complete").exists():
            return None
        return {p.relative_to(d).as_posix(): p.read_text(encoding="utf-8")
                for p in sorted(d.rglob("*")) if p.is_file() and p.name != ".complete"}

    def commit(self, stage: str, key: str, files: Mapping[str, str]) -> None:
        final = self.entry(stage, key)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=f".{key}."))
        try:
            for rel, text in files.items():
                (tmp / rel).parent.mkdir(parents=True, exist_ok=True)
                (tmp / rel).write_text(text, encoding="utf-8")
            (tmp / ".complete").write_text(key + "\n", encoding="utf-8")
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
        finally:
            if tmp.exists():
                shutil.rmtree(tmp)

    def publish(self, stage: str, files: Mapping[str, str]) -> Path:
        target = self.out / stage
        for rel, text in files.items():
            _atomic_write(target / rel, with_header(rel, text, self.config_hash).encode("utf-8"))
        return target

    def publish_bytes(self, stage: str, rel: str, data: bytes) -> Path:
        path = self.out / stage / rel
        _atomic_write(path, data)
        return path


# --- stages --------------------------------------------------------------------------------


def _csv_rows(rows: list[dict]) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


class Pipeline:
    def __init__(self, config: PipelineConfig, out_dir: str | Path):
        self.config = config
        self.store = ArtifactStore(out_dir, config.hash)
        self._memo: dict[str, tuple[str, dict[str, str]]] = {}
        _atomic_write(Path(out_dir) / "config.resolved.json",
                      with_header("config.resolved.json", config.to_json(), config.hash).encode("utf-8"))

    @property
    def out(self) -> Path:
        return self.store.out

    def _stage(self, name: str, key: str, build: Callable[[], dict[str, str]]) -> dict[str, str]:
        if name in self._memo and self._memo[name][0] == key:
            return self._memo[name][1]
        files = self.store.load(name, key)
        if files is None:
            log.info("%s: computing (key %s)", name, key)
            files = build()
            self.store.commit(name, key, files)
        else:
            log.info("%s: cached (key %s)", name, key)
        self.store.publish(name, files)
        self._memo[name] = (key, files)
        return files

    # synth

    def synth_key(self) -> str:
        return digest("synth", __version__, self.config.section("synthetic"))

    def synth(self) -> dict[str, str]:
        def build():
            try:
                return synthetic_files(generate_synthetic(self.config.synthetic_spec()))
            except SyntheticError as exc:
                raise DataError(str(exc)) from exc
        return self._stage("synth", self.synth_key(), build)

    # inputs

    def _source_digest(self) -> str:
        if self.config.synthetic:
            self.synth()
            return self.synth_key()
        c = self.config.section("corpus")
        tdir = Path(c["transcripts"])
        if not tdir.is_dir():
            raise DataError(f"transcript directory {tdir} does not exist")
        parts = [_file_digest(c["metadata"])] + [(p.name, _file_digest(p)) for p in sorted(tdir.glob("*.cha"))]
        return digest(parts)

    def _tagdict_paths(self) -> list[Path]:
        paths = [Path(p) for p in self.config.section("corpus", "tagdicts")]
        if self.config.synthetic:
            paths.insert(0, self.store.entry("synth", self.synth_key()) / "tagdict.csv")
        return paths

    def lexicon_paths(self) -> dict[str, Path]:
        lex = self.config.section("lexicons")
        out = {}
        for slot in LEXICON_SLOTS:
            if lex[slot]:
                out[slot] = Path(lex[slot])
            elif self.config.synthetic:
                self.synth()
                out[slot] = self.store.entry("synth", self.synth_key()) / "lexicons" / f"{slot}.csv"
            else:
                with resources.as_file(resources.files("pausefeat") / "data" / "lexicons" / f"{slot}.csv") as p:
                    out[slot] = Path(p)
        return out

    def lexicon_digest(self) -> str:
        paths = self.lexicon_paths()
        return digest(self.config.section("lexicons", "frequency_transform"),
                      {slot: _file_digest(p) for slot, p in paths.items()})

    def lexicons(self) -> Lexicons:
        transform = self.config.section("lexicons", "frequency_transform")
        try:
            return load_lexicons(self.lexicon_paths(), {"frequency": transform})
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load lexicons: {exc}") from exc

    def info_units(self) -> tuple[str, ...]:
        path = self.config.section("features", "info_units")
        try:
            return load_info_units(path or None)
        except OSError as exc:
            raise DataError(f"cannot read info units: {exc}") from exc

    # extract

    def extract_key(self) -> str:
        source = self._source_digest()
        tagdicts = [_file_digest(p) for p in self._tagdict_paths()]
        return digest("extract", __version__, source, self.config.section("corpus"),
                      self.config.section("subsets"), tagdicts)

    def _load_raw_corpus(self) -> Corpus:
        cfg = self.config.parse_config()
        if self.config.synthetic:
            base = self.store.entry("synth", self.synth_key())
            tdir, meta = base / "transcripts", base / "metadata.csv"
        else:
            c = self.config.section("corpus")
            tdir, meta = Path(c["transcripts"]), Path(c["metadata"])
        try:
            return load_corpus(tdir, meta, cfg)
        except (ChatParseError, OSError, KeyError, ValueError) as exc:
            raise DataError(f"cannot load corpus: {exc}") from exc

    def extract(self) -> dict[str, str]:
        def build():
            raw = self._load_raw_corpus()
            if self.config.section("corpus", "pretagged"):
                tagger = PretaggedTagger()
            else:
                try:
                    tagger = LexiconTagger.from_files(self._tagdict_paths())
                except (OSError, ValueError) as exc:
                    raise DataError(f"cannot load tag dictionary: {exc}") from exc
            corpus = annotate_corpus(raw, tagger)
            subsets = build_subsets(corpus, self.config.contexts, self.config.section("subsets", "skip_boundaries"))
            files = {"corpus.json": dumps_corpus(corpus)}
            for ctx, table in subsets.items():
                files[f"subsets/{ctx.value}.jsonl"] = dumps_subset(table)
            files["table1.csv"] = _csv_rows(subset_counts_table(subsets, corpus))
            return files
        return self._stage("extract", self.extract_key(), build)

    def corpus(self) -> Corpus:
        return loads_corpus(self.extract()["corpus.json"])

    # guide

    def guide_key(self) -> str:
        return digest("guide", __version__, self.extract_key(), self.lexicon_digest(),
                      self.config.section("subsequence"), self.config.seeds)

    def guide(self) -> dict[str, str]:
        def build():
            files = self.extract()
            lex = self.lexicons()
            arrays = {}
            for ctx in self.config.contexts:
                table = loads_subset(files[f"subsets/{ctx.value}.jsonl"], ctx)
                if len(table) < self.config.section("subsequence", "n_folds"):
                    raise DataError(f"subset {ctx.value} has too few samples for cross-validation")
                arrays[ctx] = encode_subset(table, lex)
            report = run_subsequence_cv(arrays, self.config.search_config(), self.config.grid())
            guidance = guide_aggregates(report)
            labels = self.config.grid_indices()
            report_dict = report.to_dict()
            for entry in report_dict["subsets"].values():
                if entry["ok"]:
                    entry["best_index"] = labels[entry["best_index"]]
                    for c in entry["configs"]:
                        c["index"] = labels[c["index"]]
            report_dict["guidance"] = guidance.to_dict()
            out = {
                "subseq_report.json": json.dumps(report_dict, indent=2, ensure_ascii=False) + "\n",
                "guide.json": json.dumps(guidance.to_dict(), indent=2, ensure_ascii=False) + "\n",
                "table3.csv": report.table3_csv(),
                "table6.csv": report.table6_csv(),
            }
            for ctx, o in report.outcomes.items():
                if o.ok:
                    out[f"trials/{ctx.value}.csv"] = o.result.trial_log_csv()
            return out
        return self._stage("guide", self.guide_key(), build)

    def guidance(self) -> dict:
        return json.loads(self.guide()["guide.json"])

    # features

    def distances(self) -> tuple[int, ...]:
        if self.config.section("features", "all_distances"):
            return (1, 2, 3)
        winner = self.guidance()["winner"]
        return distances_for(winner)

    def features_key(self) -> str:
        return digest("features", __version__, self.extract_key(), self.lexicon_digest(),
                      self.config.section("features"), self.config.section("subsets", "skip_boundaries"),
                      list(self.distances()), list(self.info_units()))

    def features(self) -> dict[str, str]:
        def build():
            table = build_feature_table(self.corpus(), self.lexicons(), self.distances(), self.info_units(),
                                        self.config.section("features", "split_sides"),
                                        self.config.section("subsets", "skip_boundaries"))
            counts = table.column_counts()
            for prov, n in counts.items():
                log.info("features: %s has %d columns", prov, n)
            meta = {"distances": list(self.distances()), "column_counts": counts}
            return {"features.csv": table.to_csv(),
                    "features.json": json.dumps(meta, indent=2) + "\n"}
        return self._stage("features", self.features_key(), build)

    def feature_table(self) -> FeatureTable:
        return FeatureTable.from_csv(self.features()["features.csv"])

    # classify

    def classify_key(self) -> str:
        return digest("classify", __version__, self.features_key(), self.config.section("transcript"),
                      self.config.seeds)

    def classify(self) -> dict[str, str]:
        def build():
            table = self.feature_table()
            report = run_transcript_cv(table, self.config.transcript_config())
            full = table
            if sorted({c.split(".", 1)[0] for c in table.columns if c.startswith("FD")}) != ["FD1", "FD2", "FD3"]:
                full = build_feature_table(self.corpus(), self.lexicons(), (1, 2, 3), (),
                                           self.config.section("features", "split_sides"),
                                           self.config.section("subsets", "skip_boundaries"))
            sig = significance_analysis(self.corpus(), self.lexicons(), full, (1, 2, 3),
                                        self.config.section("subsets", "skip_boundaries"))
            return {
                "transcript_report.json": json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
                "table2.csv": report.table2_csv(),
                "table7.csv": report.table7_csv(),
                "predictions.csv": report.predictions_csv(),
                "selection.csv": report.selection_csv(),
                "accuracy_plot.csv": report.plot_csv(),
                "significance.csv": sig.to_csv(),
            }
        return self._stage("classify", self.classify_key(), build)

    # report

    def report(self) -> Path:
        from .plotting import render_report

        guide = self.guide()
        classify = self.classify()
        extract = self.extract()
        tables = {
            "table1.csv": extract["table1.csv"],
            "table2.csv": classify["table2.csv"],
            "table3.csv": guide["table3.csv"],
            "table4.csv": classify["significance.csv"],
            "table6.csv": guide["table6.csv"],
            "table7.csv": classify["table7.csv"],
            "accuracy_plot.csv": classify["accuracy_plot.csv"],
        }
        target = self.store.publish("report", tables)
        for rel, data in render_report(tables, header_line(self.config.hash)).items():
            self.store.publish_bytes("report", rel, data)
        return target

    def run_all(self) -> Path:
        self.extract()
        self.guide()
        self.features()
        self.classify()
        return self.report()
