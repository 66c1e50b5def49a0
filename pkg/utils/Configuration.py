import hashlib
import json
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from harmonic import HalfplaneSolver
from harmonic.Errors import ConfigurationError
from utils import Logging

MASTER_CONFIG = dict()
MASTER_LOADED = False
CONFIG_FILE = 'config.json'

DEFAULT_COMMANDS = ["Solve", "Flow", "Spectrum", "KerrDump", "Verify"]


def save():
    global MASTER_CONFIG
    with open(CONFIG_FILE, 'w') as jsonfile:
        jsonfile.write((json.dumps(MASTER_CONFIG, indent=4, skipkeys=True, sort_keys=True)))


def load():
    global MASTER_CONFIG, MASTER_LOADED
    try:
        with open(CONFIG_FILE, 'r') as jsonfile:
            MASTER_CONFIG = json.load(jsonfile)
            MASTER_LOADED = True
    except FileNotFoundError:
        Logging.error("Unable to load config, running with defaults.")
        MASTER_LOADED = True
    except Exception as e:
        Logging.error("Failed to parse configuration.")
        raise e


def get_var(key, default=None):
    global MASTER_CONFIG, MASTER_LOADED
    if not MASTER_LOADED:
        load()
    if key not in MASTER_CONFIG.keys():
        MASTER_CONFIG[key] = default
        save()
    return MASTER_CONFIG[key]


# run configuration: one JSON document per invocation, never written back

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PunctureModel(_Strict):
    z: float
    J: float

    @field_validator("J")
    @classmethod
    def nonzero(cls, value):
        if value == 0:
            raise ValueError("angular momentum must be nonzero")
        return value


class GridModel(_Strict):
    rho_max: float = Field(200.0, gt=0)
    z_half_width: float = Field(200.0, gt=0)
    n_rho: int = Field(160, ge=3)
    n_z: int = Field(320, ge=3)
    excision_radius: float = Field(0.005, gt=0)
    grading: float = Field(1.0, ge=0)
    cluster_offset: Optional[float] = Field(None, gt=0)

    def spec(self, center: float = 0.0) -> HalfplaneSolver.GridSpec:
        return HalfplaneSolver.GridSpec(rho_max=self.rho_max, z_min=center - self.z_half_width,
                                        z_max=center + self.z_half_width, n_rho=self.n_rho, n_z=self.n_z,
                                        excision_radius=self.excision_radius, grading=self.grading,
                                        cluster_offset=self.cluster_offset)


class SolverModel(_Strict):
    tol: float = Field(1e-6, gt=0)
    max_iters: int = Field(60, ge=1)
    damping: float = Field(1.0, gt=0, le=1)
    armijo: float = Field(1e-4, gt=0, lt=1)
    b_tol: float = Field(1e-4, gt=0)
    b_max_rounds: int = Field(25, ge=1)
    fit_ring_factor: float = Field(4.0, gt=1)
    linear_solver: Literal["direct", "redblack"] = "direct"

    def options(self) -> HalfplaneSolver.SolverOptions:
        return HalfplaneSolver.SolverOptions(**self.model_dump())


class FlowModel(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    t_max: float = Field(1.0, gt=0)
    collision_gap: Optional[float] = Field(None, gt=0)
    scatter_gap: Optional[float] = Field(None, gt=0)
    stagnation_tol: float = Field(0.01, ge=0)
    energy_tol: float = Field(0.01, ge=0)


class SpectralModel(_Strict):
    n_theta: int = Field(256, ge=16)
    modes: List[int] = [0]
    b_list: List[float] = [0.0]
    k: int = Field(6, ge=1)
    a: float = Field(2.0, gt=0)

    @field_validator("modes")
    @classmethod
    def nonnegative_modes(cls, value):
        if any(m < 0 for m in value):
            raise ValueError("azimuthal modes must be nonnegative")
        return value

    @field_validator("b_list")
    @classmethod
    def open_interval(cls, value):
        if any(not -1.0 < b < 1.0 for b in value):
            raise ValueError("tangent parameters must satisfy |b| < 1")
        return value


class VerifyModel(_Strict):
    suites: List[str] = []
    slow: bool = False


class RunConfig(_Strict):
    schema_version: Literal[1] = 1
    punctures: List[PunctureModel] = []
    potential_shift: float = 0.0
    grid: GridModel = GridModel()
    solver: SolverModel = SolverModel()
    flow: FlowModel = FlowModel()
    spectral: SpectralModel = SpectralModel()
    verify: VerifyModel = VerifyModel()
    seed: int = 0
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def geometry(self):
        zs = [p.z for p in self.punctures]
        if any(b <= a for a, b in zip(zs[:-1], zs[1:])):
            raise ValueError(f"puncture positions must be strictly increasing, got {zs}")
        try:
            HalfplaneSolver.validate_geometry(self.puncture_config(), self.grid_spec())
        except ConfigurationError as e:
            raise ValueError(str(e)) from e
        return self

    def puncture_config(self) -> HalfplaneSolver.PunctureConfig:
        return HalfplaneSolver.PunctureConfig.from_lists([p.z for p in self.punctures],
                                                          [p.J for p in self.punctures], self.potential_shift)

    def grid_spec(self) -> HalfplaneSolver.GridSpec:
        return self.grid.spec(self.puncture_config().center)


def parse_run_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed configuration JSON: {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, 'r', encoding="UTF-8") as file:
            text = file.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read configuration {path}: {e}") from e
    return parse_run_config(text)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
