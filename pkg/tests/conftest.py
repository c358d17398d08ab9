import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("plap", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("plap")
