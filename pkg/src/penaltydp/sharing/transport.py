"""Transports between the coordinator and the parties.

``in_process`` calls party objects directly. ``socket`` starts each party in
its own process; every party holds one TCP connection to the coordinator and
exchanges newline-delimited JSON frames over it.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import selectors
import socket
import time

from .protocol import ContributionTimeout, Party, ProtocolError
from .wire import Kind, MessageDecodeError, PartyMessage, decode_message, encode_message

log = logging.getLogger(__name__)


class InProcessTransport:
    def __init__(self, parties):
        self.parties = sorted(parties, key=lambda p: p.party_id)

    def request(self, msg, n, timeout):
        replies = [p.handle(msg) for p in self.parties]
        return [r for r in replies if r is not None]

    def notify(self, msg):
        for p in self.parties:
            p.handle(msg)

    def close(self):
        self.notify(PartyMessage(0, Kind.SHUTDOWN))


def party_main(host, port, shard, model, sigma, seed):
    """Entry point of a party process: answer proposals until SHUTDOWN or EOF."""
    party = Party(shard, model, sigma, seed)
    with socket.create_connection((host, port)) as sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with sock.makefile("rb") as fh:
            for line in fh:
                msg = decode_message(line)
                if msg.kind is Kind.SHUTDOWN:
                    break
                reply = party.handle(msg)
                if reply is not None:
                    sock.sendall(encode_message(reply))


class SocketTransport:
    def __init__(self, shards, model, sigma, seed, host="127.0.0.1", connect_timeout=60.0):
        self._server = socket.create_server((host, 0))
        port = self._server.getsockname()[1]
        ctx = mp.get_context("spawn")
        self._procs = [
            ctx.Process(target=party_main, args=(host, port, s, model, sigma, seed), daemon=True)
            for s in shards
        ]
        for p in self._procs:
            p.start()
        self._server.settimeout(0.25)
        self._sel = selectors.DefaultSelector()
        self._buf = {}
        deadline = time.monotonic() + connect_timeout
        while len(self._buf) < len(shards):
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                dead = [p for p in self._procs if p.exitcode is not None]
                if dead or time.monotonic() > deadline:
                    self.close()
                    why = "a party process exited" if dead else "parties did not connect in time"
                    raise ProtocolError(why) from None
                continue
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._buf[conn] = bytearray()
            self._sel.register(conn, selectors.EVENT_READ)

    def _send_all(self, msg):
        frame = encode_message(msg)
        for conn in self._buf:
            conn.sendall(frame)

    def request(self, msg, n, timeout):
        self._send_all(msg)
        deadline = time.monotonic() + timeout
        replies = []
        while len(replies) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ContributionTimeout(f"round {msg.round}: {len(replies)} of {n} contributions")
            for key, _ in self._sel.select(remaining):
                conn = key.fileobj
                chunk = conn.recv(65536)
                if not chunk:
                    raise ProtocolError("a party closed its connection")
                buf = self._buf[conn]
                buf.extend(chunk)
                while b"\n" in buf:
                    i = buf.index(b"\n") + 1
                    frame = bytes(buf[:i])
                    del buf[:i]
                    try:
                        reply = decode_message(frame)
                    except MessageDecodeError as exc:
                        raise ProtocolError(f"bad frame from party: {exc}") from None
                    if reply.round < msg.round:
                        log.debug("dropping stale contribution for round %d", reply.round)
                        continue
                    replies.append(reply)
        return replies

    def notify(self, msg):
        self._send_all(msg)

    def close(self):
        try:
            self._send_all(PartyMessage(0, Kind.SHUTDOWN))
        except OSError:
            pass
        for conn in list(self._buf):
            self._sel.unregister(conn)
            conn.close()
        self._buf.clear()
        self._server.close()
        for p in self._procs:
            p.join(timeout=10)
            if p.is_alive():
                p.terminate()


def make_transport(kind, shards, model, sigma, seed):
    if kind == "in_process":
        return InProcessTransport([Party(s, model, sigma, seed) for s in shards])
    if kind == "socket":
        return SocketTransport(shards, model, sigma, seed)
    raise ValueError(f"unknown transport {kind!r}")
