"""Serial-over-TCP: run the pump simulator as its own process and let a
gateway connect to it, mirroring the wired serial link with a local socket.

The byte protocol on the wire is exactly the serial framing from
:mod:`siot.pump`. The link splits the stream into frame-sized chunks without
validating them; CRC checking stays in the gateway so that line noise turns
into FRAME_ERROR faults there, same as on the in-process link.
"""

from __future__ import annotations

import socket
import time

from siot.gateway import LinkTimeout
from siot.pump import SOF, FrameType, PumpSimulator, frame_decode, frame_encode


def split_stream(buf: bytearray) -> list[bytes]:
    """Carve complete frame-shaped chunks off the front of ``buf``.

    Garbage before a SOF comes out as its own chunk (it will fail to decode
    downstream, which is the point). Incomplete frames stay buffered.
    """
    chunks: list[bytes] = []
    while buf:
        if buf[0] != SOF:
            cut = buf.find(bytes([SOF]))
            if cut < 0:
                cut = len(buf)
            chunks.append(bytes(buf[:cut]))
            del buf[:cut]
            continue
        if len(buf) < 3:
            break
        total = 5 + buf[2]
        if len(buf) < total:
            break
        chunks.append(bytes(buf[:total]))
        del buf[:total]
    return chunks


class TcpPumpServer:
    """Serves one PumpSimulator on a TCP socket, self-ticking on wall time
    scaled by ``time_scale`` simulated seconds per real second."""

    def __init__(self, pump: PumpSimulator, host: str = "127.0.0.1", port: int = 9100,
                 time_scale: float = 60.0):
        self.pump = pump
        self.host = host
        self.port = port
        self.time_scale = time_scale
        self._stop = False

    def stop(self) -> None:
        self._stop = True

    def serve_forever(self) -> None:
        with socket.create_server((self.host, self.port)) as server:
            server.settimeout(0.5)
            while not self._stop:
                try:
                    conn, _ = server.accept()
                except socket.timeout:
                    continue
                with conn:
                    self._serve_client(conn)

    def _serve_client(self, conn: socket.socket) -> None:
        conn.settimeout(0.05)
        rx = bytearray()
        fraction = 0.0
        last = time.monotonic()
        while not self._stop:
            now = time.monotonic()
            fraction += (now - last) * self.time_scale
            last = now
            dt = int(fraction)
            if dt > 0:
                fraction -= dt
                try:
                    for frame in self.pump.tick(dt):
                        conn.sendall(frame_encode(frame))
                except OSError:
                    return
            try:
                chunk = conn.recv(4096)
                if not chunk:
                    return
                rx += chunk
                for raw in split_stream(rx):
                    try:
                        reply = self.pump.handle_frame(frame_decode(raw))
                    except Exception:
                        continue  # noise on the control path; no reply
                    conn.sendall(frame_encode(reply))
            except socket.timeout:
                pass
            except OSError:
                return
            time.sleep(0.02)


class TcpPumpLink:
    """Gateway-side endpoint: satisfies the PumpLink protocol over a socket."""

    def __init__(self, host: str = "127.0.0.1", port: int = 9100, connect_timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        self._sock.settimeout(0.05)
        self._rx = bytearray()
        self._reports: list[bytes] = []

    def close(self) -> None:
        self._sock.close()

    def _pump_in(self) -> None:
        try:
            while True:
                chunk = self._sock.recv(4096)
                if not chunk:
                    raise LinkTimeout("pump closed the connection")
                self._rx += chunk
        except socket.timeout:
            pass
        self._reports.extend(split_stream(self._rx))

    def poll(self) -> list[bytes]:
        self._pump_in()
        out, self._reports = self._reports, []
        return out

    def send(self, frame_bytes: bytes, timeout: float = 5.0) -> bytes:
        """Send a control frame; returns the next ACK/NACK chunk, keeping any
        interleaved report frames for later polls."""
        self._sock.sendall(frame_bytes)
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            self._pump_in()
            for i, raw in enumerate(self._reports):
                if len(raw) >= 2 and raw[0] == SOF and raw[1] in (FrameType.ACK, FrameType.NACK):
                    return self._reports.pop(i)
            time.sleep(0.01)
        raise LinkTimeout(f"no pump reply within {timeout} s")
