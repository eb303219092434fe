import numpy as np
import pytest

from vzeno.vsystem import Preset, preset


def taylor_expm(a: np.ndarray) -> np.ndarray:
    """Independent matrix-exponential oracle: scaled Taylor series to machine precision."""
    nrm = np.linalg.norm(a, 1)
    s = max(0, int(np.ceil(np.log2(max(nrm, 1e-300) / 0.25))))
    x = np.asarray(a, dtype=complex) / 2**s
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, 60):
        term = term @ x / k
        out = out + term
        if np.linalg.norm(term, 1) < 1e-20 * np.linalg.norm(out, 1):
            break
    for _ in range(s):
        out = out @ out
    return out


@pytest.fixture(scope="session")
def itano() -> Preset:
    return preset("itano")
