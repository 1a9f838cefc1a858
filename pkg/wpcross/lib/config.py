import json
import os
from typing import Any

from wpcross.lib.errors import ConfigurationError

# root dir is the directory of the main entrypoint
ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))


class _Config:
    config_file = os.path.join(ROOT_DIR, "settings.json")

    def __init__(self) -> None:
        self._overrides: dict[str, Any] = {}

    def __read(self) -> dict:
        if not os.path.isfile(self.config_file):
            return {}

        try:
            with open(self.config_file) as fp:
                data = json.load(fp)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Could not parse settings file {self.config_file}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigurationError(f"Settings file {self.config_file} must hold a JSON object")
        return data

    def __write(self, path: str, data: dict) -> None:
        with open(path, "w") as fp:
            json.dump(data, fp, indent=2, sort_keys=True)

    def __get(self, key: str, default: Any = None) -> Any:
        if key in self._overrides:
            return self._overrides[key]

        # dotted keys walk nested tables
        data: Any = self.__read()
        for part in key.split("."):
            if not isinstance(data, dict) or part not in data:
                return default
            data = data[part]
        return data

    def load(self, path: str) -> None:
        if not os.path.isfile(path):
            raise ConfigurationError(f"Settings file {path} does not exist")
        self.config_file = os.path.abspath(path)
        self.__read()

    def override(self, key: str, value: Any) -> None:
        self._overrides[key] = value

    def resolved(self) -> dict:
        return {
            "output": {"directory": self.output_directory},
            "log_file_directory": self.log_file_directory,
            "worker_count": self.worker_count,
            "scenario": self.scenario,
            "eps": self.eps,
            "potential": {"id": self.potential_id, "dim": self.potential_dim, "alpha0": self.potential_alpha0,
                          "c": self.potential_c},
            "packet": {"q0": self.packet_q0, "p0": self.packet_p0, "mode": self.packet_mode},
            "schedule": {"delta": self.schedule_delta, "beta": self.schedule_beta,
                         "localize": self.schedule_localize},
            "grid": {
                "profile_points": self.profile_points,
                "profile_half_width": self.profile_half_width,
                "reference_points": self.reference_points,
                "reference_half_width": self.reference_half_width,
                "time_step": self.time_step,
            },
            "reference": {"enabled": self.reference_enabled, "observe_every": self.reference_observe_every},
            "lz": {"z_values": self.lz_z_values, "T": self.lz_T, "step": self.lz_step,
                   "method": self.lz_method, "argument": self.lz_argument, "ode_z": self.lz_ode_z},
        }

    def save(self, path: str) -> None:
        self.__write(path, self.resolved())

    @property
    def output_directory(self) -> str:
        return self.__get("output.directory", os.path.join(ROOT_DIR, "output"))

    @property
    def log_file_directory(self) -> str:
        return self.__get("log_file_directory", os.path.join(ROOT_DIR, "logs"))

    @property
    def worker_count(self) -> int:
        return int(self.__get("worker_count", 2))

    @property
    def scenario(self) -> str:
        return self.__get("scenario", "isotropic-crossing")

    @property
    def eps(self) -> list[float]:
        return [float(e) for e in self.__get("eps", [1e-2])]

    @property
    def potential_id(self) -> str:
        return self.__get("potential.id", "isotropic-linear")

    @property
    def potential_dim(self) -> int:
        return int(self.__get("potential.dim", 2))

    @property
    def potential_alpha0(self) -> float:
        return float(self.__get("potential.alpha0", 0.0))

    @property
    def potential_c(self) -> float:
        return float(self.__get("potential.c", 1.0))

    @property
    def packet_q0(self) -> list[float]:
        return [float(v) for v in self.__get("packet.q0", [-1.0, 0.0])]

    @property
    def packet_p0(self) -> list[float]:
        return [float(v) for v in self.__get("packet.p0", [2.0, 0.0])]

    @property
    def packet_mode(self) -> str:
        return self.__get("packet.mode", "minus")

    @property
    def schedule_delta(self) -> str | float:
        return self.__get("schedule.delta", "auto")

    @property
    def schedule_beta(self) -> float:
        return float(self.__get("schedule.beta", 1.0 / 60.0))

    @property
    def schedule_localize(self) -> bool:
        return bool(self.__get("schedule.localize", False))

    @property
    def profile_points(self) -> int:
        return int(self.__get("grid.profile_points", 256))

    @property
    def profile_half_width(self) -> float:
        return float(self.__get("grid.profile_half_width", 12.0))

    @property
    def reference_points(self) -> int:
        return int(self.__get("grid.reference_points", 512))

    @property
    def reference_half_width(self) -> float | None:
        value = self.__get("grid.reference_half_width", None)
        return None if value is None else float(value)

    @property
    def time_step(self) -> float:
        return float(self.__get("grid.time_step", 1e-3))

    @property
    def reference_enabled(self) -> bool:
        return bool(self.__get("reference.enabled", True))

    @property
    def reference_observe_every(self) -> int:
        return int(self.__get("reference.observe_every", 10))

    @property
    def lz_z_values(self) -> list[float]:
        return [float(z) for z in self.__get("lz.z_values", [round(0.05 * k, 2) for k in range(121)])]

    @property
    def lz_T(self) -> float:
        return float(self.__get("lz.T", 200.0))

    @property
    def lz_step(self) -> float:
        return float(self.__get("lz.step", 0.01))

    @property
    def lz_method(self) -> str:
        return self.__get("lz.method", "magnus")

    @property
    def lz_argument(self) -> str:
        return self.__get("lz.argument", "printed")

    @property
    def lz_ode_z(self) -> list[float]:
        return [float(z) for z in self.__get("lz.ode_z", [0.3, 0.8, 1.5])]


config = _Config()
