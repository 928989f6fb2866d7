"""Results Store - CSV/JSON persistence for experiment outputs.

Every writer goes through pandas (CSV) or json with canonical formatting so that
identical runs produce byte-identical files. Checksums of written files are
collected for the run manifest.
"""

import hashlib
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from labs.divergence_lab import ErrorProfile, NormCurve
from labs.lti_lab import TransferFunction
from labs.phase_retrieval import AmplitudeSamples, MeasurementDesign
from labs.sampling_series import Provenance, SamplingSet
from labs.signal_core import Quadrature, Spectrum
from services.error_handler import IoFailure, error_handler

FLOAT_FORMAT = "%.17g"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ResultsStore:
    """Writes experiment artifacts under one output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        self.checksums: Dict[str, str] = {}
        with self._guard("create output directory", self.output_dir):
            self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Initialized results store at {self.output_dir}")

    @contextmanager
    def _guard(self, operation: str, path: Path):
        try:
            yield
        except OSError as e:
            error = IoFailure(f"{operation} failed for {path}: {e}", context={"path": str(path)})
            error_handler.handle_io_error(error, str(path), {"operation": operation})
            raise error from e

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _record(self, name: str) -> str:
        checksum = sha256_file(self.path(name))
        self.checksums[name] = checksum
        logger.debug(f"Wrote {name} ({checksum[:12]})")
        return checksum

    # --- generic writers ---

    def write_frame(self, name: str, frame: pd.DataFrame) -> str:
        target = self.path(name)
        with self._guard("write csv", target):
            frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._record(name)

    def write_json(self, name: str, data: Dict[str, Any], record: bool = True) -> Optional[str]:
        target = self.path(name)
        with self._guard("write json", target):
            with open(target, "w", newline="\n") as f:
                json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
                f.write("\n")
        return self._record(name) if record else None

    def write_text(self, name: str, text: str) -> str:
        target = self.path(name)
        with self._guard("write text", target):
            with open(target, "w", newline="\n") as f:
                f.write(text)
        return self._record(name)

    def read_frame(self, name: str) -> pd.DataFrame:
        target = self.path(name)
        with self._guard("read csv", target):
            return pd.read_csv(target, float_precision="round_trip")

    def read_json(self, name: str) -> Dict[str, Any]:
        target = self.path(name)
        with self._guard("read json", target):
            with open(target, "r") as f:
                return json.load(f)

    # --- typed writers ---

    def write_spectrum(self, stem: str, f: Spectrum) -> None:
        frame = pd.DataFrame({"omega": f.grid, "re": f.values.real, "im": f.values.imag})
        self.write_frame(f"{stem}.csv", frame)
        self.write_json(f"{stem}.json", f.metadata())

    def read_spectrum(self, stem: str) -> Spectrum:
        frame = self.read_frame(f"{stem}.csv")
        meta = self.read_json(f"{stem}.json")
        values = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        return Spectrum(float(meta["band_edge"]), frame["omega"].to_numpy(), values,
                        Quadrature(meta["quadrature"]), meta.get("family", "custom"), meta.get("seed"))

    def write_transfer(self, stem: str, h: TransferFunction) -> None:
        frame = pd.DataFrame({"omega": h.grid, "re": h.values.real, "im": h.values.imag})
        self.write_frame(f"{stem}.csv", frame)
        self.write_json(f"{stem}.json", h.metadata())

    def write_sampling_set(self, stem: str, sampling_set: SamplingSet) -> None:
        points = np.asarray(sampling_set.points, dtype=complex)
        frame = pd.DataFrame({"n": sampling_set.indices, "lambda_re": points.real, "lambda_im": points.imag})
        self.write_frame(f"{stem}.csv", frame)
        self.write_json(f"{stem}.json", {"first_index": sampling_set.first_index,
                                         "provenance": sampling_set.provenance.value})

    def read_sampling_set(self, stem: str) -> SamplingSet:
        frame = self.read_frame(f"{stem}.csv")
        meta = self.read_json(f"{stem}.json")
        points = frame["lambda_re"].to_numpy()
        if np.any(frame["lambda_im"].to_numpy() != 0):
            points = points + 1j * frame["lambda_im"].to_numpy()
        return SamplingSet(points, int(meta["first_index"]), Provenance(meta["provenance"]))

    def write_amplitudes(self, name: str, samples: AmplitudeSamples) -> str:
        blocks, m = np.meshgrid(samples.indices, np.arange(samples.c.shape[1]), indexing="ij")
        frame = pd.DataFrame({"n": blocks.ravel(), "m": m.ravel(), "c": samples.c.ravel()})
        return self.write_frame(name, frame)

    def write_design(self, name: str, design: MeasurementDesign) -> Optional[str]:
        return self.write_json(name, design.to_dict())

    def read_design(self, name: str) -> MeasurementDesign:
        return MeasurementDesign.from_dict(self.read_json(name))

    def write_norm_curve(self, name: str, curve: NormCurve) -> str:
        return self.write_frame(name, pd.DataFrame({"N": curve.ns, "value": curve.values}))

    def write_error_profiles(self, name: str, profiles: Sequence[ErrorProfile]) -> str:
        frame = pd.DataFrame(
            [{"N": p.N, "local_sup": p.local_sup, "global_sup": p.global_sup, "argmax_t": p.argmax_t}
             for p in profiles],
            columns=["N", "local_sup", "global_sup", "argmax_t"],
        )
        return self.write_frame(name, frame)

    def write_curve(self, name: str, x_name: str, xs: Iterable[Any], y_name: str, ys: Iterable[float]) -> str:
        return self.write_frame(name, pd.DataFrame({x_name: list(xs), y_name: list(ys)}))

    def write_plot_script(self, name: str, csv_name: str, x_col: str, y_cols: List[str],
                          log_x: bool = False, log_y: bool = False, title: str = "") -> str:
        """Gnuplot-compatible script text plotting columns of a written CSV."""
        header = self.read_frame(csv_name).columns.tolist()
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set title '{title or csv_name}'",
            f"set xlabel '{x_col}'",
        ]
        if log_x:
            lines.append("set logscale x")
        if log_y:
            lines.append("set logscale y")
        x = header.index(x_col) + 1
        plots = [f"'{csv_name}' using {x}:{header.index(col) + 1} with linespoints" for col in y_cols]
        lines.append("plot " + ", \\\n     ".join(plots))
        return self.write_text(name, "\n".join(lines) + "\n")


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    return value
