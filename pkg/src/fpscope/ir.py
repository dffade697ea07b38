"""Line-oriented textual IR for SDK and app code.

The format stands in for Dalvik bytecode and carries only what the analyses
consume: registers, calls, field accesses, string constants and the
instruction kind of every statement.

Example document::

    sdk com.example:tracker:1.0
    class com.example.Tracker
    method com.example.Tracker.collect public sig="(android.content.Context)->?" params=r0
      invoke_static r1 api:android.os.Build.getSerial
      const_string r2 "https://collect.example.com"
      invoke_virtual r3 callee:com.example.Net.post r2,r1
      return r3

Parsing is strict: every error carries a 1-based line and column and the
whole document is rejected.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

__all__ = [
    "FRAMEWORK_PREFIXES",
    "ClassIR",
    "IRError",
    "Instruction",
    "InstructionKind",
    "MethodIR",
    "SdkCoordinate",
    "SdkIR",
    "anonymize_signature",
    "is_framework_type",
    "kind_histogram",
    "parse_ir",
    "render_ir",
]

FRAMEWORK_PREFIXES = ("java.", "javax.", "android.")
PRIMITIVE_TYPES = frozenset(
    {"void", "boolean", "byte", "char", "short", "int", "long", "float", "double"}
)

_TOKEN_RE = re.compile(r"[^\s:]+")
_REGISTER_RE = re.compile(r"r\d+")
_ID_RE = re.compile(r'[^\s,"=#]+')
_TYPE_NAME_RE = re.compile(r"[A-Za-z_$][\w$.]*")


class IRError(ValueError):
    """Rejected IR document; `line` and `column` are 1-based."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True, order=True)
class SdkCoordinate:
    group: str
    artifact: str
    version: str

    def __post_init__(self) -> None:
        for name in ("group", "artifact", "version"):
            value = getattr(self, name)
            if not value or ":" in value or not _TOKEN_RE.fullmatch(value):
                raise ValueError(f"invalid coordinate {name}: {value!r}")

    @classmethod
    def parse(cls, text: str) -> "SdkCoordinate":
        parts = text.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"coordinate must be group:artifact:version, got {text!r}")
        return cls(*parts)

    @property
    def key(self) -> tuple[str, str]:
        """The (group, artifact) pair shared by all versions of one SDK."""
        return (self.group, self.artifact)

    def __str__(self) -> str:
        return f"{self.group}:{self.artifact}:{self.version}"


class InstructionKind(enum.Enum):
    """Instruction groupings used for histograms and taint transfer.

    The 34 members are this package's own stand-in for a Dalvik opcode
    grouping; only ASSIGN, LOAD_INSTANCE and THROW are known names.
    """

    ASSIGN = "assign"
    CONST = "const"
    CONST_STRING = "const_string"
    NEW_INSTANCE = "new_instance"
    NEW_ARRAY = "new_array"
    LOAD_INSTANCE = "load_instance"
    STORE_INSTANCE = "store_instance"
    LOAD_STATIC = "load_static"
    STORE_STATIC = "store_static"
    LOAD_ARRAY = "load_array"
    STORE_ARRAY = "store_array"
    INVOKE_VIRTUAL = "invoke_virtual"
    INVOKE_STATIC = "invoke_static"
    INVOKE_DIRECT = "invoke_direct"
    INVOKE_INTERFACE = "invoke_interface"
    INVOKE_SUPER = "invoke_super"
    RETURN = "return"
    RETURN_VOID = "return_void"
    THROW = "throw"
    GOTO = "goto"
    IF = "if"
    SWITCH = "switch"
    CMP = "cmp"
    UNARY_OP = "unary_op"
    BINARY_OP = "binary_op"
    CAST = "cast"
    INSTANCE_OF = "instance_of"
    ARRAY_LENGTH = "array_length"
    MONITOR_ENTER = "monitor_enter"
    MONITOR_EXIT = "monitor_exit"
    MOVE_EXCEPTION = "move_exception"
    MOVE_RESULT = "move_result"
    NOP = "nop"
    FILL_ARRAY = "fill_array"

    @property
    def is_invoke(self) -> bool:
        return self in INVOKE_KINDS

    @property
    def is_field_access(self) -> bool:
        return self in FIELD_KINDS


KIND_INDEX = {kind: i for i, kind in enumerate(InstructionKind)}

INVOKE_KINDS = frozenset(
    {
        InstructionKind.INVOKE_VIRTUAL,
        InstructionKind.INVOKE_STATIC,
        InstructionKind.INVOKE_DIRECT,
        InstructionKind.INVOKE_INTERFACE,
        InstructionKind.INVOKE_SUPER,
    }
)
FIELD_KINDS = frozenset(
    {
        InstructionKind.LOAD_INSTANCE,
        InstructionKind.STORE_INSTANCE,
        InstructionKind.LOAD_STATIC,
        InstructionKind.STORE_STATIC,
    }
)

# kind -> (dst: "req" | "opt" | "none", min srcs, max srcs or None for variadic)
_K = InstructionKind
_SHAPES: dict[InstructionKind, tuple[str, int, Optional[int]]] = {
    _K.ASSIGN: ("req", 1, 1),
    _K.CONST: ("req", 0, 0),
    _K.CONST_STRING: ("req", 0, 0),
    _K.NEW_INSTANCE: ("req", 0, 0),
    _K.NEW_ARRAY: ("req", 0, 1),
    _K.LOAD_INSTANCE: ("req", 1, 1),
    _K.STORE_INSTANCE: ("none", 2, 2),
    _K.LOAD_STATIC: ("req", 0, 0),
    _K.STORE_STATIC: ("none", 1, 1),
    _K.LOAD_ARRAY: ("req", 1, 2),
    _K.STORE_ARRAY: ("none", 2, 3),
    _K.RETURN: ("none", 1, 1),
    _K.RETURN_VOID: ("none", 0, 0),
    _K.THROW: ("none", 1, 1),
    _K.GOTO: ("none", 0, 0),
    _K.IF: ("none", 1, 2),
    _K.SWITCH: ("none", 1, 1),
    _K.CMP: ("req", 2, 2),
    _K.UNARY_OP: ("req", 1, 1),
    _K.BINARY_OP: ("req", 1, 2),
    _K.CAST: ("req", 1, 1),
    _K.INSTANCE_OF: ("req", 1, 1),
    _K.ARRAY_LENGTH: ("req", 1, 1),
    _K.MONITOR_ENTER: ("none", 1, 1),
    _K.MONITOR_EXIT: ("none", 1, 1),
    _K.MOVE_EXCEPTION: ("req", 0, 0),
    _K.MOVE_RESULT: ("req", 1, 1),
    _K.NOP: ("none", 0, 0),
    _K.FILL_ARRAY: ("none", 1, 1),
}
for _kind in INVOKE_KINDS:
    _SHAPES[_kind] = ("opt", 0, None)
del _K, _kind


@dataclass(frozen=True)
class Instruction:
    kind: InstructionKind
    dst: Optional[str] = None
    srcs: tuple[str, ...] = ()
    api: Optional[str] = None
    callee: Optional[str] = None
    field: Optional[str] = None
    literal: Optional[str] = None

    def validate(self) -> None:
        """Raise ValueError if the operands do not fit the kind."""
        kind = self.kind
        dst_rule, lo, hi = _SHAPES[kind]
        if dst_rule == "req" and self.dst is None:
            raise ValueError(f"{kind.value} requires a destination register")
        if dst_rule == "none" and self.dst is not None:
            raise ValueError(f"{kind.value} takes no destination register")
        if len(self.srcs) < lo or (hi is not None and len(self.srcs) > hi):
            raise ValueError(f"{kind.value} takes {lo}..{hi} source registers, got {len(self.srcs)}")
        for reg in ((self.dst,) if self.dst else ()) + self.srcs:
            if not _REGISTER_RE.fullmatch(reg):
                raise ValueError(f"bad register {reg!r}")
        if kind.is_invoke:
            if (self.api is None) == (self.callee is None):
                raise ValueError(f"{kind.value} needs exactly one of api:/callee:")
        elif self.api is not None or self.callee is not None:
            raise ValueError(f"api/callee only allowed on invoke kinds, not {kind.value}")
        if kind.is_field_access != (self.field is not None):
            raise ValueError(f"field operand required iff field access ({kind.value})")
        if (kind is InstructionKind.CONST_STRING) != (self.literal is not None):
            raise ValueError(f"string literal required iff const_string ({kind.value})")
        for ident in (self.api, self.callee, self.field):
            if ident is not None and not _ID_RE.fullmatch(ident):
                raise ValueError(f"bad identifier {ident!r}")


@dataclass(frozen=True)
class MethodIR:
    id: str
    visibility: str
    anon_signature: str
    params: tuple[str, ...] = ()
    body: tuple[Instruction, ...] = ()

    @property
    def is_public(self) -> bool:
        return self.visibility == "public"


@dataclass(frozen=True)
class ClassIR:
    id: str
    methods: tuple[MethodIR, ...] = ()


@dataclass(frozen=True)
class SdkIR:
    coordinate: SdkCoordinate
    classes: tuple[ClassIR, ...] = ()

    def iter_methods(self) -> Iterator[tuple[ClassIR, MethodIR]]:
        for cls in self.classes:
            for method in cls.methods:
                yield cls, method

    def method_ids(self) -> set[str]:
        return {m.id for _, m in self.iter_methods()}


def is_framework_type(name: str) -> bool:
    return name.startswith(FRAMEWORK_PREFIXES)


def anonymize_signature(signature: str) -> str:
    """Replace every developer-chosen type name in `signature` with ``?``."""

    def repl(match: re.Match) -> str:
        name = match.group(0)
        if name in PRIMITIVE_TYPES or is_framework_type(name):
            return name
        return "?"

    return _TYPE_NAME_RE.sub(repl, signature)


def _check_signature(signature: str) -> Optional[str]:
    if '"' in signature or "\n" in signature:
        return "signature may not contain quotes or newlines"
    for match in _TYPE_NAME_RE.finditer(signature):
        name = match.group(0)
        if name not in PRIMITIVE_TYPES and not is_framework_type(name):
            return f"developer-chosen type name {name!r} in anonymized signature"
    return None


def kind_histogram(method: MethodIR) -> list[int]:
    """Counts per InstructionKind, in enumeration order (34 buckets)."""
    counts = [0] * len(KIND_INDEX)
    for ins in method.body:
        counts[KIND_INDEX[ins.kind]] += 1
    return counts


# --------------------------------------------------------------------- parsing

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "r": "\r", "t": "\t"}
_UNESCAPES = {v: "\\" + k for k, v in _ESCAPES.items()}


def _escape(text: str) -> str:
    return "".join(_UNESCAPES.get(ch, ch) for ch in text)


def _read_string(line: str, start: int, lineno: int) -> tuple[str, int]:
    """Decode a quoted literal starting at `start`; return (value, end index)."""
    assert line[start] == '"'
    out = []
    i = start + 1
    while i < len(line):
        ch = line[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= len(line) or line[i + 1] not in _ESCAPES:
                raise IRError("invalid escape sequence in string literal", lineno, i + 1)
            out.append(_ESCAPES[line[i + 1]])
            i += 2
            continue
        out.append(ch)
        i += 1
    raise IRError("unterminated string literal", lineno, start + 1)


def _tokenize(line: str, lineno: int) -> list[tuple[str, int, bool]]:
    """Split on whitespace; quoted strings become one token flagged as literal."""
    tokens = []
    i = 0
    while i < len(line):
        if line[i].isspace():
            i += 1
            continue
        if line[i] == '"':
            value, end = _read_string(line, i, lineno)
            if end < len(line) and not line[end].isspace():
                raise IRError("junk after string literal", lineno, end + 1)
            tokens.append((value, i + 1, True))
            i = end
            continue
        j = i
        while j < len(line) and not line[j].isspace() and line[j] != '"':
            j += 1
        # a quote glued to a bare token (sig="...") starts the next token
        tokens.append((line[i:j], i + 1, False))
        i = j
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.coordinate: Optional[SdkCoordinate] = None
        self.classes: list[tuple[str, list]] = []
        self.class_ids: set[str] = set()
        self.method_ids: set[str] = set()
        # current method state
        self.method: Optional[dict] = None
        self.defined: set[str] = set()

    def parse(self) -> SdkIR:
        for lineno, raw in enumerate(self.lines, start=1):
            line = raw.rstrip("\r")
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if line.startswith("  "):
                self._instruction(line, lineno)
            elif line[0].isspace():
                raise IRError("instructions are indented by exactly two spaces", lineno, 1)
            else:
                self._directive(line, lineno)
        self._close_method()
        if self.coordinate is None:
            raise IRError("missing 'sdk' declaration", 1, 1)
        classes = tuple(ClassIR(cid, tuple(methods)) for cid, methods in self.classes)
        return SdkIR(self.coordinate, classes)

    def _directive(self, line: str, lineno: int) -> None:
        tokens = _tokenize(line, lineno)
        word, col, _ = tokens[0]
        if word == "sdk":
            if self.coordinate is not None:
                raise IRError("duplicate 'sdk' declaration", lineno, col)
            if self.classes:
                raise IRError("'sdk' must precede all classes", lineno, col)
            if len(tokens) != 2:
                raise IRError("expected 'sdk group:artifact:version'", lineno, col)
            try:
                self.coordinate = SdkCoordinate.parse(tokens[1][0])
            except ValueError as exc:
                raise IRError(str(exc), lineno, tokens[1][1]) from None
        elif word == "class":
            if self.coordinate is None:
                raise IRError("'class' before 'sdk' declaration", lineno, col)
            if len(tokens) != 2 or tokens[1][2] or not _ID_RE.fullmatch(tokens[1][0]):
                raise IRError("expected 'class <class-id>'", lineno, col)
            cid = tokens[1][0]
            if cid in self.class_ids:
                raise IRError(f"duplicate class id {cid!r}", lineno, tokens[1][1])
            self._close_method()
            self.class_ids.add(cid)
            self.classes.append((cid, []))
        elif word == "method":
            self._method(line, tokens, lineno)
        else:
            raise IRError(f"unknown directive {word!r}", lineno, col)

    def _method(self, line: str, tokens: list, lineno: int) -> None:
        col = tokens[0][1]
        if not self.classes:
            raise IRError("'method' outside of a class", lineno, col)
        if len(tokens) != 6:
            raise IRError(
                "expected 'method <id> <public|nonpublic> sig=\"...\" params=...'", lineno, col
            )
        (mid, mcol, mlit), (vis, vcol, _), (sig_tok, scol, _), (sig, sigcol, siglit) = tokens[1:5]
        par, pcol, _ = tokens[5]
        if mlit or not _ID_RE.fullmatch(mid):
            raise IRError(f"bad method id {mid!r}", lineno, mcol)
        if mid in self.method_ids:
            raise IRError(f"duplicate method id {mid!r}", lineno, mcol)
        if vis not in ("public", "nonpublic"):
            raise IRError(f"visibility must be public or nonpublic, got {vis!r}", lineno, vcol)
        # tokenizer splits sig="..." into 'sig=' and the literal only when quoted
        if sig_tok != "sig=" or not siglit or line[sigcol - 2] != "=":
            raise IRError('expected sig="<anon-signature>"', lineno, scol)
        problem = _check_signature(sig)
        if problem:
            raise IRError(problem, lineno, sigcol)
        if not par.startswith("params="):
            raise IRError("expected params=r0,r1,...", lineno, pcol)
        params = tuple(p for p in par[len("params=") :].split(",") if p) if par != "params=" else ()
        seen = set()
        for p in params:
            if not _REGISTER_RE.fullmatch(p):
                raise IRError(f"bad parameter register {p!r}", lineno, pcol)
            if p in seen:
                raise IRError(f"duplicate parameter register {p!r}", lineno, pcol)
            seen.add(p)
        if par.endswith(",") or ",," in par:
            raise IRError("empty parameter register", lineno, pcol)
        self._close_method()
        self.method_ids.add(mid)
        self.method = {"id": mid, "vis": vis, "sig": sig, "params": params, "body": []}
        self.defined = set(params)

    def _close_method(self) -> None:
        if self.method is not None:
            m = self.method
            self.classes[-1][1].append(
                MethodIR(m["id"], m["vis"], m["sig"], m["params"], tuple(m["body"]))
            )
            self.method = None

    def _instruction(self, line: str, lineno: int) -> None:
        if self.method is None:
            raise IRError("instruction outside of a method", lineno, 3)
        if line[2].isspace():
            raise IRError("instructions are indented by exactly two spaces", lineno, 3)
        tokens = _tokenize(line, lineno)
        word, col, lit = tokens[0]
        try:
            kind = InstructionKind(word) if not lit else None
        except ValueError:
            kind = None
        if kind is None:
            raise IRError(f"unknown instruction kind {word!r}", lineno, col)
        dst_rule, _, _ = _SHAPES[kind]
        rest = tokens[1:]
        dst = None
        if dst_rule in ("req", "opt") and rest and not rest[0][2] and _REGISTER_RE.fullmatch(rest[0][0]):
            dst = rest[0][0]
            rest = rest[1:]
        elif dst_rule == "req":
            raise IRError(f"{word} requires a destination register", lineno, col)
        srcs: list[tuple[str, int]] = []
        api = callee = fld = literal = None
        for text, tcol, is_lit in rest:
            if is_lit:
                if line[tcol - 2] != " ":
                    raise IRError("string literal must be preceded by a space", lineno, tcol)
                if kind is not InstructionKind.CONST_STRING or literal is not None:
                    raise IRError("unexpected string literal", lineno, tcol)
                literal = text
            elif text.startswith("api:") and kind.is_invoke:
                if api or callee:
                    raise IRError("more than one call target", lineno, tcol)
                api = text[4:]
            elif text.startswith("callee:") and kind.is_invoke:
                if api or callee:
                    raise IRError("more than one call target", lineno, tcol)
                callee = text[7:]
            elif kind.is_field_access and not _is_register_list(text):
                if fld is not None:
                    raise IRError("more than one field operand", lineno, tcol)
                fld = text[6:] if text.startswith("field:") else text
            elif _is_register_list(text):
                srcs.extend((r, tcol) for r in text.split(","))
            else:
                raise IRError(f"unexpected operand {text!r}", lineno, tcol)
        for reg, rcol in srcs:
            if reg not in self.defined:
                raise IRError(f"register {reg} used before definition", lineno, rcol)
        ins = Instruction(
            kind=kind,
            dst=dst,
            srcs=tuple(r for r, _ in srcs),
            api=api,
            callee=callee,
            field=fld,
            literal=literal,
        )
        try:
            ins.validate()
        except ValueError as exc:
            raise IRError(str(exc), lineno, col) from None
        if dst is not None:
            self.defined.add(dst)
        self.method["body"].append(ins)


def _is_register_list(text: str) -> bool:
    return all(_REGISTER_RE.fullmatch(part) for part in text.split(","))


def parse_ir(text: str) -> SdkIR:
    """Parse and validate one IR document."""
    return _Parser(text).parse()


# ------------------------------------------------------------------- rendering


def _render_instruction(ins: Instruction) -> str:
    parts = [ins.kind.value]
    kind = ins.kind
    srcs = ",".join(ins.srcs)
    if ins.dst is not None:
        parts.append(ins.dst)
    if kind is InstructionKind.CONST_STRING:
        parts.append(f'"{_escape(ins.literal)}"')
    elif kind.is_invoke:
        parts.append(f"api:{ins.api}" if ins.api is not None else f"callee:{ins.callee}")
        if srcs:
            parts.append(srcs)
    elif kind is InstructionKind.STORE_INSTANCE:
        parts += [ins.srcs[0], f"field:{ins.field}", ins.srcs[1]]
    elif kind is InstructionKind.STORE_STATIC:
        parts += [f"field:{ins.field}", srcs]
    elif kind.is_field_access:
        if ins.srcs:
            parts.append(srcs)
        parts.append(f"field:{ins.field}")
    elif srcs:
        parts.append(srcs)
    return "  " + " ".join(parts)


def render_ir(sdk: SdkIR) -> str:
    """Canonical text for `sdk`; parse_ir(render_ir(s)) == s."""
    out = [f"sdk {sdk.coordinate}"]
    for cls in sdk.classes:
        out.append(f"class {cls.id}")
        for m in cls.methods:
            out.append(
                f'method {m.id} {m.visibility} sig="{m.anon_signature}" params={",".join(m.params)}'
            )
            out.extend(_render_instruction(ins) for ins in m.body)
    return "\n".join(out) + "\n"


def validate_sdk(sdk: SdkIR) -> None:
    """Check a programmatically built SdkIR by round-tripping it through the parser."""
    parse_ir(render_ir(sdk))


def load_corpus(paths: Iterable) -> dict[SdkCoordinate, SdkIR]:
    """Parse IR files into a coordinate-keyed map; duplicate coordinates are an error."""
    from pathlib import Path

    corpus: dict[SdkCoordinate, SdkIR] = {}
    for path in sorted(Path(p) for p in paths):
        try:
            sdk = parse_ir(path.read_text(encoding="utf-8"))
        except IRError as exc:
            raise IRError(f"{path}: {exc.message}", exc.line, exc.column) from None
        if sdk.coordinate in corpus:
            raise IRError(f"{path}: duplicate SDK {sdk.coordinate}")
        corpus[sdk.coordinate] = sdk
    return corpus
