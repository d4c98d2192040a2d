"""Binary checkpoint format.

Layout::

    PL3D-CKPT v1\\n
    MANIFEST <n_bytes>\\n
    <n_bytes of UTF-8 JSON>\\n
    <raw little-endian float32 arrays, in manifest order>

The manifest records every network's layer spec, the shape of each stored
array and an optional ``extra`` section for caller metadata.
"""

import json

import numpy as np

from ..errors import ParseError
from .layers import build_from_spec

MAGIC = b"PL3D-CKPT v1\n"
_F32LE = np.dtype("<f4")


def _state(net):
    return net.parameters() + net.buffers()


def save_checkpoint(path, networks, extra=None):
    """``networks`` maps a name to a layer stack; values are stored as float32."""
    manifest = {"networks": {}, "arrays": [], "extra": extra or {}}
    blobs = []
    for name, net in networks.items():
        manifest["networks"][name] = net.spec()
        for i, p in enumerate(_state(net)):
            manifest["arrays"].append({"network": name, "index": i, "name": p.name,
                                       "shape": list(p.value.shape)})
            blobs.append(np.ascontiguousarray(p.value, dtype=_F32LE).tobytes())
    body = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"MANIFEST %d\n" % len(body))
        fh.write(body + b"\n")
        for b in blobs:
            fh.write(b)


def load_checkpoint(path, dtype=np.float32):
    """Return ``(networks, extra)``; networks are rebuilt in eval mode."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ParseError("not a PL3D checkpoint (bad magic)", 1, path)
    pos = len(MAGIC)
    nl = data.index(b"\n", pos)
    head = data[pos:nl].split(b" ")
    if len(head) != 2 or head[0] != b"MANIFEST":
        raise ParseError("missing MANIFEST line", 2, path)
    n = int(head[1])
    manifest = json.loads(data[nl + 1 : nl + 1 + n].decode("utf-8"))
    pos = nl + 1 + n + 1
    nets = {name: build_from_spec(spec, dtype) for name, spec in manifest["networks"].items()}
    states = {name: _state(net) for name, net in nets.items()}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if pos + nbytes > len(data):
            raise ParseError("checkpoint truncated", None, path)
        arr = np.frombuffer(data, dtype=_F32LE, count=count, offset=pos).reshape(shape)
        pos += nbytes
        p = states[entry["network"]][entry["index"]]
        if p.value.shape != shape:
            raise ParseError(f"shape mismatch for {entry['network']}[{entry['index']}]", None, path)
        p.value = arr.astype(dtype)
        p.grad = np.zeros_like(p.value)
    if pos != len(data):
        raise ParseError("trailing bytes after parameter arrays", None, path)
    for net in nets.values():
        net.eval()
    return nets, manifest["extra"]
