# -*- encoding: utf-8 -*-
import argparse
import json
from pathlib import Path
from typing import Any, List, Union

import numpy as np


class ChurnLabError(Exception):
    pass


def mkdir(dir_path: Union[str, Path]) -> None:
    Path(dir_path).mkdir(parents=True, exist_ok=True)


def read_txt(txt_path: Union[str, Path]) -> List[str]:
    if not isinstance(txt_path, str):
        txt_path = str(txt_path)

    with open(txt_path, "r", encoding="utf-8") as f:
        data = list(map(lambda x: x.rstrip("\n"), f))
    return data


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dump_json(obj: Any) -> str:
    """Stable JSON text: insertion-ordered keys, numpy scalars unwrapped."""
    return json.dumps(obj, indent=2, ensure_ascii=False, default=_to_builtin) + "\n"


def save_json(save_path: Union[str, Path], obj: Any) -> None:
    save_path = Path(save_path)
    mkdir(save_path.parent)
    with open(save_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_json(obj))


def load_json(json_path: Union[str, Path]) -> Any:
    with open(json_path, "r", encoding="utf-8") as f:
        return json.load(f)


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed that depends only on ``seed`` and ``keys``, never on call order."""
    seq = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def float_range(mini, maxi):
    """Return function handle of an argument type function for
    ArgumentParser checking a float range: mini <= arg <= maxi
      mini - minimum acceptable argument
      maxi - maximum acceptable argument"""

    def float_range_checker(arg):
        try:
            f = float(arg)
        except ValueError as exc:
            raise argparse.ArgumentTypeError("must be a floating point number") from exc

        if f < mini or f > maxi:
            raise argparse.ArgumentTypeError(
                "must be in range [" + str(mini) + " .. " + str(maxi) + "]"
            )
        return f

    return float_range_checker


def non_negative_int(arg: str) -> int:
    """argparse type for seeds: an unsigned 64-bit integer."""
    try:
        v = int(arg)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("must be an integer") from exc

    if v < 0 or v >= 2**64:
        raise argparse.ArgumentTypeError("must be in range [0 .. 2**64 - 1]")
    return v
