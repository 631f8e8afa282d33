"""Small file helpers: atomic text writes and round-trip float formatting."""

import os
import tempfile


def fmt_float(x) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write `text` to `path` via a temp file + rename; never leaves a
    partially written target behind."""
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
