#!/usr/bin/env python3
# Copyright 2026 The edgeval Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes golden envelope vectors, assembled byte by byte with struct."""
import json
import pathlib
import struct

OUT = pathlib.Path(__file__).resolve().parent / "envelopes.json"
TYPES = {"INIT": 1, "FRAME": 2, "ACK": 3, "COMPOSITE": 4, "CONTROL": 5, "POINTCLOUD": 6, "ERROR": 7, "END": 8}


def header_bytes(header):
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def assemble(msg_type, header_raw, payloads, magic=b"ARCD", version=1):
    out = bytearray(magic)
    out += struct.pack("<BB", version, msg_type)
    out += struct.pack("<I", len(header_raw)) + header_raw
    out += struct.pack("<B", len(payloads))
    for p in payloads:
        out += struct.pack("<I", len(p)) + p
    return bytes(out)


def ok(name, type_name, header, payloads=(), canonical=True):
    raw = assemble(TYPES[type_name], header_bytes(header), list(payloads))
    return {
        "name": name,
        "hex": raw.hex(),
        "expect": {"type": type_name, "header": header, "payloads": [p.hex() for p in payloads]},
        "canonical": canonical,
    }


def bad(name, raw, code):
    return {"name": name, "hex": raw.hex(), "error": code}


identity = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]
depth_2x2 = struct.pack("<4H", 1000, 2000, 0, 65535)
# 1x1 RGB PNG (red), fixed bytes so the vector does not depend on a zlib build.
png_1x1 = bytes.fromhex(
    "89504e470d0a1a0a0000000d4948445200000001000000010802000000907753de"
    "0000000c4944415408d763f8cfc000000301010018dd8db00000000049454e44ae426082")

vectors = [
    ok("end_empty", "END", {}),
    ok("ack_frame", "ACK", {"frame_index": 7}),
    ok("error_no_session", "ERROR", {"code": "NoSuchSession", "message": "no session 'x'"}),
    ok("frame_identity", "FRAME", {"index": 0, "pose": identity, "timestamp_ns": 1000000000},
       [png_1x1, depth_2x2]),
    ok("composite", "COMPOSITE",
       {"frame_index": 3, "model_id": "scale2", "session_id": "ramp", "task": "occlusion_plane"}, [png_1x1]),
    ok("control_select", "CONTROL", {"model_ids": ["a", "b"], "session_id": "s", "type": "select_models"}),
    ok("control_seek", "CONTROL", {"frame_index": 4, "session_id": "s", "type": "replay_seek"}),
    ok("pointcloud_empty_payload", "POINTCLOUD", {"frame_index": 0}, [b""]),
    ok("init_manifest", "INIT", {
        "created_at": "2026-01-01T00:00:00Z",
        "depth_resolution": {"height": 2, "width": 2},
        "intrinsics": {"cx": 1, "cy": 1, "fx": 2, "fy": 2, "height": 2, "width": 2},
        "objects": [],
        "session_id": "golden",
        "target_resolution": {"height": 2, "width": 2}}, canonical=False),
    ok("unicode_header", "ACK", {"note": "café µm"}),
    ok("three_payloads", "ACK", {}, [b"\x00", b"\x01\x02", b"\xff" * 5]),
    bad("bad_magic", b"XXXX" + assemble(8, b"{}", [])[4:], "BadMagic"),
    bad("bad_version", assemble(8, b"{}", [], version=2), "UnsupportedVersion"),
    bad("unknown_type", assemble(0x09, b"{}", []), "UnknownMessageType"),
    bad("truncated_payload", assemble(3, b"{}", [b"abcd"])[:-1], "Truncated"),
    bad("trailing_byte", assemble(8, b"{}", []) + b"\x00", "TrailingBytes"),
    bad("malformed_header", assemble(8, b"{nope", []), "MalformedHeader"),
    bad("header_not_object", assemble(8, b"[1,2]", []), "MalformedHeader"),
    bad("short_buffer", b"ARC", "Truncated"),
]

OUT.write_text(json.dumps(vectors, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
print(f"wrote {len(vectors)} vectors to {OUT}")
