"""Line-oriented key=value run configuration."""

import hashlib
from dataclasses import dataclass, fields, replace

from .systems import parse_number


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # system and orbit source
    system: str = "complex_henon c=-1 b=0.3"
    orbit: str = "cycle"  # cycle | random | horseshoe | blocks | periodic | uniform
    word: str = "0^120 1"  # cycle itinerary, run-length tokens 'sym^count'
    signs: str = "1,1,-1,1"  # sign itinerary for orbit=periodic
    bulge: float = 0.7
    x0: str = ""  # seed point 'a,b' for orbit=random (empty: drawn from the seed)
    transient: int = 1000
    samples: int = 3000  # orbit length for random / horseshoe / uniform sources
    K1: int = 10
    K2: int = 4
    blocks: int = 800
    L: int = 0  # window lengths; 0 picks a default for the source
    M: int = 0
    # budget
    gamma: float = 0.1
    gamma0: float = 0.005
    h: float = 1e-3
    eta: float = 1e-3
    eps: float = 1.0  # chart constant C in eps = C e^{2 gamma} 4h / r0
    r0: float = 0.01
    delta_measure: float = 0.1
    rho: float = 0.1  # entropy slack: coded entropy must reach log N / n - rho
    chi_top: float = float("nan")  # nan: measured on the orbit
    chi_u: float = float("nan")
    chi_s: float = float("nan")
    # closing
    max_m: int = 8
    H: int = 8
    max_returns: int = 10
    J: int = 200  # forward generation cap
    L_gen: int = 200  # backward generation cap
    # coding
    Lw: int = 6
    n_min: int = 10
    n_max: int = 20
    N: int = 2
    margin: int = 2000
    sep_eps: float = 0.5
    words: int = 500
    mc_words: int = 10000
    # entropy
    eps_list: str = "0.5,1.0"
    m_list: str = "2,3,4,5,6"
    # tolerances
    residual_tol: float = 1e-9
    polish_tol: float = 1e-8
    semiconj_tol: float = 1e-6
    # run
    seed: int = 0
    workers: int = 1
    out: str = "-"

    def floats(self, key):
        return [float(v) for v in getattr(self, key).split(",") if v.strip()]

    def ints(self, key):
        return [int(v) for v in getattr(self, key).split(",") if v.strip()]

    def expanded_word(self):
        """'0^120 1' -> '000...01'."""
        out = []
        for tok in self.word.split():
            sym, _, count = tok.partition("^")
            out.append(sym * (int(count) if count else 1))
        return "".join(out)

    def canonical(self):
        return "".join(f"{f.name}={format_value(getattr(self, f.name))}\n" for f in fields(self))

    def hash(self):
        """Digest of every field except seed and out, so reseeding keeps the hash."""
        skip = {"seed", "out"}
        text = "".join(line for line in self.canonical().splitlines(True)
                       if line.split("=", 1)[0] not in skip)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def format_value(v):
    return repr(v) if isinstance(v, float) else str(v)


def _convert(key, text):
    typ = FIELD_TYPES[key]
    try:
        if typ is int or typ == "int":
            return int(text)
        if typ is float or typ == "float":
            v = parse_number(text)
            if isinstance(v, complex):
                raise ValueError("complex value")
            return float(v)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config(text, base=None):
    """Parse 'key = value' lines; '#' starts a comment; unknown keys are errors."""
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected key=value")
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _convert(key, val)
    return replace(base or RunConfig(), **values)


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
