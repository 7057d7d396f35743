import sys
from pathlib import Path

# Allow cross-test imports (test_schema.random_coordination etc.).
sys.path.insert(0, str(Path(__file__).parent))
