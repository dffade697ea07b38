"""Synthetic corpora with planted SDKs, for measuring matcher accuracy.

Each synthetic SDK draws most of its API calls and string constants from a
private vocabulary and the rest from a pool shared by every SDK. An app is
built from a few SDKs by deleting a fraction of their methods and renaming
every class and method, then padding with app-specific classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ir import ClassIR, Instruction, InstructionKind, MethodIR, SdkCoordinate, SdkIR

K = InstructionKind

_PLAIN_OPS = (K.BINARY_OP, K.UNARY_OP, K.CMP, K.CAST, K.IF, K.GOTO, K.ASSIGN, K.CONST, K.NEW_INSTANCE)
_PARAM_TYPES = (
    "int",
    "long",
    "boolean",
    "java.lang.String",
    "android.content.Context",
    "android.os.Bundle",
    "java.util.Map",
    "?",
)
_RETURN_TYPES = ("void", "int", "boolean", "java.lang.String", "?")


@dataclass(frozen=True)
class SynthParams:
    n_sdks: int = 50
    n_apps: int = 30
    sdks_per_app: int = 3
    deletion_rate: float = 0.2
    classes: tuple[int, int] = (4, 10)
    methods: tuple[int, int] = (2, 6)
    body: tuple[int, int] = (4, 14)
    private_apis: int = 24
    shared_apis: int = 120
    shared_fraction: float = 0.3
    app_own_classes: int = 5


@dataclass(frozen=True)
class PlantedCorpus:
    sdks: tuple[SdkIR, ...]
    apps: tuple[SdkIR, ...]
    truth: dict[str, frozenset[SdkCoordinate]]


class _Gen:
    def __init__(self, params: SynthParams, rng: np.random.Generator):
        self.p = params
        self.rng = rng
        self.shared = [f"android.shared.S{i // 8}.call{i % 8}" for i in range(params.shared_apis)]

    def pick(self, seq: Sequence):
        return seq[int(self.rng.integers(len(seq)))]

    def signature(self) -> str:
        n = int(self.rng.integers(0, 4))
        params = ",".join(self.pick(_PARAM_TYPES) for _ in range(n))
        return f"({params})->{self.pick(_RETURN_TYPES)}"

    def method(self, mid: str, apis: Sequence[str], strings: Sequence[str]) -> MethodIR:
        lo, hi = self.p.body
        n = int(self.rng.integers(lo, hi + 1))
        body = []
        reg = 0
        for _ in range(n - 1):
            roll = self.rng.random()
            if roll < 0.45:
                pool = self.shared if self.rng.random() < self.p.shared_fraction else apis
                body.append(Instruction(K.INVOKE_VIRTUAL, f"r{reg}", (), api=self.pick(pool)))
            elif roll < 0.6:
                body.append(Instruction(K.CONST_STRING, f"r{reg}", literal=self.pick(strings)))
            else:
                kind = self.pick(_PLAIN_OPS)
                if kind in (K.CONST, K.NEW_INSTANCE):
                    body.append(Instruction(kind, f"r{reg}"))
                elif kind in (K.IF, K.GOTO):
                    srcs = (f"r{reg - 1}",) if kind is K.IF and reg else ()
                    body.append(Instruction(K.GOTO if not srcs else kind, None, srcs))
                    continue
                elif reg == 0:
                    body.append(Instruction(K.CONST, f"r{reg}"))
                elif kind in (K.BINARY_OP, K.CMP):
                    a = f"r{int(self.rng.integers(reg))}"
                    b = f"r{int(self.rng.integers(reg))}"
                    body.append(Instruction(kind, f"r{reg}", (a, b)))
                else:
                    body.append(Instruction(kind, f"r{reg}", (f"r{int(self.rng.integers(reg))}",)))
            reg += 1
        body.append(Instruction(K.RETURN_VOID))
        visibility = "public" if self.rng.random() < 0.6 else "nonpublic"
        return MethodIR(mid, visibility, self.signature(), (), tuple(body))

    def sdk(self, i: int) -> SdkIR:
        apis = [f"android.v{i}.Api{j // 6}.op{j % 6}" for j in range(self.p.private_apis)]
        strings = [f"sdk{i}-const-{j}" for j in range(12)] + ["UTF-8", "GET", "application/json"]
        pkg = f"com.synth{i}.lib"
        classes = []
        for c in range(int(self.rng.integers(self.p.classes[0], self.p.classes[1] + 1))):
            cid = f"{pkg}.C{c}"
            n_methods = int(self.rng.integers(self.p.methods[0], self.p.methods[1] + 1))
            classes.append(ClassIR(cid, tuple(self.method(f"{cid}.m{m}", apis, strings) for m in range(n_methods))))
        return SdkIR(SdkCoordinate(f"com.synth{i}", "lib", "1.0"), tuple(classes))

    def own_class(self, cid: str, app_idx: int) -> ClassIR:
        apis = [f"android.app{app_idx}.Own.op{j}" for j in range(6)] + self.shared
        strings = [f"app{app_idx}-string-{j}" for j in range(5)]
        n = int(self.rng.integers(self.p.methods[0], self.p.methods[1] + 1))
        return ClassIR(cid, tuple(self.method(f"{cid}.m{m}", apis, strings) for m in range(n)))


def _rename(cls: ClassIR, new_id: str, keep: Sequence[MethodIR]) -> ClassIR:
    return ClassIR(new_id, tuple(
        MethodIR(f"{new_id}.x{j}", m.visibility, m.anon_signature, m.params, m.body) for j, m in enumerate(keep)
    ))


def planted_corpus(params: SynthParams = SynthParams(), seed: int = 0) -> PlantedCorpus:
    """Generate SDKs plus apps with known embedded SDKs."""
    rng = np.random.default_rng(seed)
    gen = _Gen(params, rng)
    sdks = tuple(gen.sdk(i) for i in range(params.n_sdks))
    apps, truth = [], {}
    for a in range(params.n_apps):
        app_id = f"app{a:03d}"
        chosen = sorted(rng.choice(params.n_sdks, size=params.sdks_per_app, replace=False).tolist())
        classes = []
        for s in chosen:
            for cls in sdks[s].classes:
                keep = [m for m in cls.methods if rng.random() >= params.deletion_rate]
                if keep:
                    classes.append((cls, keep))
        for _ in range(params.app_own_classes):
            own = gen.own_class("own", a)
            classes.append((own, list(own.methods)))
        order = rng.permutation(len(classes))
        renamed = tuple(_rename(classes[k][0], f"o.c{j}", classes[k][1]) for j, k in enumerate(order))
        apps.append(SdkIR(SdkCoordinate("app", app_id, "1"), renamed))
        truth[app_id] = frozenset(sdks[s].coordinate for s in chosen)
    return PlantedCorpus(sdks, tuple(apps), truth)


def precision_recall(
    predicted: dict[str, set[SdkCoordinate]], truth: dict[str, frozenset[SdkCoordinate]]
) -> tuple[float, float]:
    """Micro-averaged precision and recall of (app, SDK) detections."""
    tp = sum(len(set(predicted.get(a, ())) & t) for a, t in truth.items())
    n_pred = sum(len(set(p)) for p in predicted.values())
    n_true = sum(len(t) for t in truth.values())
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_true if n_true else 1.0
    return precision, recall
