"""Convert an SMPL-style pickle to the LBSM container.

The official model pickles were written with Python 2 and chumpy; this loader
unpickles with ``latin1`` and, when chumpy is not installed, substitutes a
stub so that chumpy arrays come back as plain numpy arrays.

    python3 scripts/convert_smpl.py SMPL_NEUTRAL.pkl smpl_neutral.lbsm --shape 10
"""
import argparse
import pickle
import sys
import types

import numpy as np

from peelkit.body import model_from_smpl_dict, save_model


class _ChumpyStub:
    """Minimal stand-in for chumpy.Ch: keeps whatever state the pickle holds."""

    def __setstate__(self, state):
        self.__dict__.update(state if isinstance(state, dict) else {"x": state})

    def __array__(self, dtype=None):
        x = self.__dict__.get("x", self.__dict__.get("r"))
        return np.asarray(x, dtype=dtype)


def _install_chumpy_stub():
    try:
        import chumpy  # noqa: F401
        return
    except ImportError:
        pass
    names = ("chumpy", "chumpy.ch", "chumpy.ch_ops", "chumpy.reordering", "chumpy.logic")
    for name in names:
        mod = types.ModuleType(name)
        mod.__getattr__ = lambda attr: _ChumpyStub  # any class resolves to the stub
        sys.modules[name] = mod


def load_smpl_pickle(path) -> dict:
    _install_chumpy_stub()
    with open(path, "rb") as fh:
        d = pickle.load(fh, encoding="latin1")
    out = {}
    for k, v in d.items():
        out[k] = v if hasattr(v, "toarray") or isinstance(v, str) else np.asarray(v)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("pickle")
    ap.add_argument("output")
    ap.add_argument("--shape", type=int, default=10, help="number of shape coefficients to keep")
    args = ap.parse_args()
    model = model_from_smpl_dict(load_smpl_pickle(args.pickle), n_shape=args.shape)
    save_model(args.output, model)
    print(f"wrote {args.output}: V={model.n_vertices} J={model.n_joints} S={model.n_shape}")


if __name__ == "__main__":
    main()
