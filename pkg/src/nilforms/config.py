"""Plain-text key=value run configuration.

One `key = value` pair per line, `#` starts a comment, unknown keys are
rejected with their line number.  The parsed config round-trips through
`serialize` byte-identically, which the CLI relies on for reproducible
manifests.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


@dataclass
class RunConfig:
    m: int = 1
    model: str = "invariant"         # "invariant" | "mode"
    n: tuple[int, ...] = (0,)        # Reeb mode sectors (mode model only)
    N: int = 16
    degree: tuple[int, ...] | str = "all"
    eps_start: float = 1.0
    eps_ratio: float = 0.5
    eps_count: int = 9
    K: int = 8
    tol_nullspace: float = 1e-8
    tol_tracking: float = 0.5
    class_band: float = 0.3
    tail_length: int = 3
    out_dir: str = "out"
    seed: int = 1234
    plots: bool = True

    def schedule(self) -> list[float]:
        return [self.eps_start * self.eps_ratio ** j for j in range(self.eps_count)]

    def degrees(self) -> list[int]:
        if self.degree == "all":
            return list(range(2 * self.m + 2))
        return list(self.degree)

    def validate(self) -> "RunConfig":
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.model not in ("invariant", "mode"):
            raise ConfigError(f"model must be 'invariant' or 'mode', got {self.model!r}")
        if self.model == "mode":
            if self.N < 4 or self.N % 2:
                raise ConfigError(f"N must be even and >= 4, got {self.N}")
        if self.degree != "all":
            for k in self.degree:
                if not 0 <= k <= 2 * self.m + 1:
                    raise ConfigError(f"degree {k} out of range for m={self.m}")
        if self.eps_start <= 0:
            raise ConfigError(f"eps_start must be positive, got {self.eps_start}")
        if not 0 < self.eps_ratio < 1:
            raise ConfigError(f"eps_ratio must lie in (0, 1), got {self.eps_ratio}")
        if self.eps_count < 1:
            raise ConfigError(f"eps schedule is empty (eps_count={self.eps_count})")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.tol_nullspace <= 0:
            raise ConfigError("tol_nullspace must be positive")
        if not 0 < self.tol_tracking <= 1:
            raise ConfigError("tol_tracking must lie in (0, 1]")
        if not 0 < self.class_band < 1:
            raise ConfigError("class_band must lie in (0, 1)")
        if self.tail_length < 1:
            raise ConfigError("tail_length must be >= 1")
        return self


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in ("m", "N", "eps_count", "K", "tail_length", "seed"):
            return int(raw)
        if key in ("eps_start", "eps_ratio", "tol_nullspace", "tol_tracking",
                   "class_band"):
            return float(raw)
        if key == "model":
            return raw.strip()
        if key == "out_dir":
            return raw.strip()
        if key == "plots":
            if raw.strip().lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.strip().lower()]
        if key == "n":
            vals = []
            for part in raw.replace(",", " ").split():
                x = float(part)
                if x != int(x):
                    raise ConfigError(
                        f"line {lineno}: flux quantization failure, n={part} is not an integer"
                    )
                vals.append(int(x))
            if not vals:
                raise ValueError(raw)
            return tuple(vals)
        if key == "degree":
            if raw.strip() == "all":
                return "all"
            return tuple(int(p) for p in raw.replace(",", " ").split())
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse {key} = {raw!r}") from None
    raise ConfigError(f"line {lineno}: unknown key {key!r}")


def parse_config(text: str) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    return RunConfig(**values).validate()


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
