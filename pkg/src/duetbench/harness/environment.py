"""Host description recorded alongside every experiment."""
from __future__ import annotations

import os
import platform
import socket
import time

UNKNOWN = "unknown"


def usable_cpus() -> list:
    try:
        return sorted(os.sched_getaffinity(0))
    except AttributeError:
        return list(range(os.cpu_count() or 1))


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or UNKNOWN


def _clock_source() -> str:
    path = "/sys/devices/system/clocksource/clocksource0/current_clocksource"
    try:
        with open(path) as f:
            return f.read().strip()
    except OSError:
        return UNKNOWN


def probe_environment() -> dict:
    info = time.get_clock_info("monotonic")
    try:
        hostname = socket.gethostname()
    except OSError:
        hostname = UNKNOWN
    return {
        "cpu_model": _cpu_model(),
        "logical_cpus": os.cpu_count() or 1,
        "usable_cpus": usable_cpus(),
        "clock": {
            "name": "monotonic",
            "implementation": info.implementation,
            "resolution_s": info.resolution,
            "source": _clock_source(),
        },
        "os": platform.platform() or UNKNOWN,
        "python": platform.python_version(),
        "hostname": hostname,
    }
