"""Identify deep-learning apps in a corpus of disassembled or packed apps.

Three signals mark an app as a DL app: bundled model files (recognized by
suffix), TFLite or MLKit API references inside smali code, and MLKit
component registrars declared in the manifest. The manifest additionally
tells which vision services the app uses.
"""

from __future__ import annotations

import re
import zipfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

MODEL_SUFFIXES = (".tflite", ".tfl", ".lite")

TFLITE_API_PREFIX = b"Lorg/tensorflow/lite/"
MLKIT_API_PREFIX = b"Lcom/google/mlkit/"

_REGISTRAR_RE = re.compile(r"com\.google\.mlkit\.vision\.[\w.]*Registrar")

SERVICE_FACE = "face_detection"
SERVICE_SELFIE = "selfie_segmentation"
SERVICE_BARCODE = "barcode"
SERVICE_POSE = "pose"
SERVICE_OBJECT = "object_detection"


class UnscannableApkError(Exception):
    """The app archive cannot be opened or enumerated."""

    def __init__(self, path: Path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True)
class DlVerdict:
    """Scan outcome for a single app."""
    app: str
    path: str
    is_dl: bool
    model_files: Tuple[str, ...] = ()
    evidence: Tuple[str, ...] = ()
    services: Tuple[str, ...] = ()
    manifest_valid: bool = False
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "app": self.app,
            "path": self.path,
            "is_dl": self.is_dl,
            "model_files": list(self.model_files),
            "evidence": list(self.evidence),
            "services": list(self.services),
            "manifest_valid": self.manifest_valid,
            "error": self.error,
        }


def is_model_file(name: str) -> bool:
    """True if the entry name carries a known model suffix (case-insensitive)."""
    lowered = name.lower()
    return any(lowered.endswith(suffix) for suffix in MODEL_SUFFIXES)


def classify_registrar(registrar: str) -> str:
    lowered = registrar.lower()
    if "face" in lowered:
        return SERVICE_FACE
    if "segmentation" in lowered:
        return SERVICE_SELFIE
    if "barcode" in lowered:
        return SERVICE_BARCODE
    if "pose" in lowered:
        return SERVICE_POSE
    if "objects" in lowered or "object" in lowered:
        return SERVICE_OBJECT
    return "other:" + registrar.rsplit(".", 1)[-1]


def extract_services(manifest_text: str) -> Tuple[bool, Tuple[str, ...]]:
    """Pull MLKit vision services out of a decoded manifest.

    Returns (manifest_valid, services). An unparseable manifest yields no
    services; the registrar scan itself is a plain pattern match so it
    tolerates attribute orderings the XML layer would normalize away.
    """
    try:
        ET.fromstring(manifest_text)
    except ET.ParseError:
        return False, ()
    found = {classify_registrar(m.group(0))
             for m in _REGISTRAR_RE.finditer(manifest_text)}
    return True, tuple(sorted(found))


def _verdict_from_entries(app: str, path: Path,
                          entries: Iterable[Tuple[str, "callable"]]) -> DlVerdict:
    """Shared scan core; ``entries`` yields (relative_name, loader())->bytes."""
    model_files: List[str] = []
    saw_tflite_api = False
    saw_mlkit_api = False
    manifest_text: Optional[str] = None

    for name, load in entries:
        if name.endswith("/"):
            continue
        if is_model_file(name):
            model_files.append(name)
        if name == "AndroidManifest.xml":
            manifest_text = load().decode("utf-8", errors="replace")
        elif name.endswith(".smali") and not (saw_tflite_api and saw_mlkit_api):
            data = load()
            if TFLITE_API_PREFIX in data:
                saw_tflite_api = True
            if MLKIT_API_PREFIX in data:
                saw_mlkit_api = True

    manifest_valid = False
    services: Tuple[str, ...] = ()
    if manifest_text is not None:
        manifest_valid, services = extract_services(manifest_text)

    evidence = []
    if model_files:
        evidence.append("model_file")
    if saw_tflite_api:
        evidence.append("tflite_api")
    if saw_mlkit_api:
        evidence.append("mlkit_api")
    if services:
        evidence.append("mlkit_manifest")

    return DlVerdict(
        app=app,
        path=str(path),
        is_dl=bool(evidence),
        model_files=tuple(sorted(model_files)),
        evidence=tuple(evidence),
        services=services,
        manifest_valid=manifest_valid,
    )


def scan_apk(path: Path) -> DlVerdict:
    """Scan a packed app archive. Raises UnscannableApkError on bad zips."""
    try:
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            entries = [(name, (lambda n=name: zf.read(n))) for name in names]
            return _verdict_from_entries(path.stem, path, entries)
    except (zipfile.BadZipFile, OSError, EOFError, RuntimeError) as exc:
        raise UnscannableApkError(path, str(exc)) from exc


def scan_tree(root: Path) -> DlVerdict:
    """Scan an extracted app directory."""
    if not root.is_dir():
        raise UnscannableApkError(root, "not a directory")
    entries = []
    for file in sorted(root.rglob("*")):
        if not file.is_file():
            continue
        rel = file.relative_to(root).as_posix()
        entries.append((rel, (lambda f=file: f.read_bytes())))
    return _verdict_from_entries(root.name, root, entries)


def scan_path(path: Path) -> DlVerdict:
    """Scan one app, returning an errored verdict instead of raising."""
    try:
        if path.is_dir():
            return scan_tree(path)
        return scan_apk(path)
    except UnscannableApkError as exc:
        return DlVerdict(app=path.stem if path.is_file() else path.name,
                         path=str(path), is_dl=False, error=exc.reason)


def percent(numerator: int, denominator: int) -> float:
    """Share as a percentage, rounded half-up to two decimals."""
    if denominator == 0:
        return 0.0
    share = Decimal(numerator) * 100 / Decimal(denominator)
    return float(share.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class CorpusStats:
    """Aggregate counts over a scanned corpus."""
    total: int = 0
    scanned: int = 0
    unscannable: int = 0
    dl: int = 0
    non_dl: int = 0
    with_services: int = 0
    service_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def percent_dl(self) -> float:
        return percent(self.dl, self.scanned)

    @property
    def percent_with_services(self) -> float:
        return percent(self.with_services, self.dl)

    def service_share(self) -> Dict[str, float]:
        """Per-service share of DL apps that declare at least one service."""
        return {name: percent(count, self.with_services)
                for name, count in sorted(self.service_counts.items())}

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "scanned": self.scanned,
            "unscannable": self.unscannable,
            "dl": self.dl,
            "non_dl": self.non_dl,
            "percent_dl": self.percent_dl,
            "with_services": self.with_services,
            "percent_with_services": self.percent_with_services,
            "service_counts": dict(sorted(self.service_counts.items())),
            "service_share": self.service_share(),
        }


def aggregate(verdicts: Iterable[DlVerdict]) -> CorpusStats:
    stats = CorpusStats()
    for verdict in verdicts:
        stats.total += 1
        if verdict.error is not None:
            stats.unscannable += 1
            continue
        stats.scanned += 1
        if not verdict.is_dl:
            stats.non_dl += 1
            continue
        stats.dl += 1
        if verdict.services:
            stats.with_services += 1
            for service in verdict.services:
                stats.service_counts[service] = stats.service_counts.get(service, 0) + 1
    return stats
