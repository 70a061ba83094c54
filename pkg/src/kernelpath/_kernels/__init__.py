"""Backend selection for the hot spectral-recursion loop.

The compiled Cython kernel and the NumPy reference implement the same
contract, `run_spectral`; the compiled one is picked automatically when
the extension built, otherwise the package falls back to NumPy. Both are
deterministic given identical inputs.

run_spectral(mu, c, xs, noise, a, b, theta, t0, checkpoints, kappa,
             m_rho, track_decomp, check_b2)
    -> (out, w, b2_violations, b2_min_margin)

where `out` has one row per checkpoint with columns TRACE_COLUMNS (the
decomposition columns are NaN unless track_decomp) and `w` is the final
coefficient vector.
"""

from . import _ref

TRACE_COLUMNS = (
    "err_rho",
    "err_K",
    "rem_rho",
    "rem_K",
    "fnorm_K",
    "gamma",
    "lambda",
    "e_init",
    "e_approx",
    "e_drift",
    "e_samp_direct",
    "e_samp_identity",
    "e_init_K",
    "e_approx_K",
    "e_drift_K",
    "e_samp_direct_K",
    "e_samp_identity_K",
)
N_COLUMNS = len(TRACE_COLUMNS)

try:
    from . import _fast

    BACKEND = "compiled"
except ImportError:  # extension not built; NumPy fallback
    _fast = None
    BACKEND = "fallback"


def backend_name(name: str | None = None) -> str:
    if name is None:
        return BACKEND
    if name in ("compiled", "fallback"):
        return name
    raise ValueError(f"unknown backend {name!r}; expected 'compiled' or 'fallback'")


def get_backend(name: str | None = None):
    name = backend_name(name)
    if name == "fallback":
        return _ref
    if _fast is None:
        raise RuntimeError("compiled backend requested but the extension is not built")
    return _fast
