"""
Thread-safe run logging shared by the training pipeline, sweep runner
and toy data generator
"""

import json
import threading
import time
from pathlib import Path


class RunLogger:
    def __init__(self, logs_dir, kind, quiet=False):
        """Create `<logs_dir>/<kind>_<unix time>.log`"""

        self.logs_dir = Path(logs_dir)
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        self.quiet = quiet
        self.lock = threading.Lock()
        self.log_file = self.logs_dir / f"{kind}_{int(time.time())}.log"

    def log(self, message):
        """Thread-safe logging"""
        timestamp = time.strftime('%Y-%m-%d %H:%M:%S')
        log_entry = f"[{timestamp}] {message}"

        with self.lock:
            if not self.quiet:
                print(log_entry)
            with open(self.log_file, 'a') as f:
                f.write(log_entry + '\n')

    def record(self, filename, record):
        """Append one JSON object per line to `<logs_dir>/<filename>`"""
        with self.lock:
            with open(self.logs_dir / filename, 'a') as f:
                f.write(json.dumps(record, sort_keys=True) + '\n')
