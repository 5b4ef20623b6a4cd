import os
import hashlib
import json
from typing import Any, Dict, Iterable, List
from app.config import config

def ensure_directories():
    """Ensure all required directories exist"""
    os.makedirs(config.RESULTS_DIR, exist_ok=True)

def hash_content(content: str) -> str:
    """Stable digest used to fingerprint records"""
    return hashlib.sha256(content.encode()).hexdigest()

def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))

def print_colored(text: str, color: str = "green"):
    """Print colored text in CLI"""
    colors = {
        "green": "\033[92m",
        "red": "\033[91m",
        "yellow": "\033[93m",
        "blue": "\033[94m",
        "reset": "\033[0m"
    }
    print(f"{colors.get(color, colors['green'])}{text}{colors['reset']}")

def save_json(data: Dict[str, Any], file_path: str):
    """Save a dictionary to a JSON file, creating parent directories"""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)

def load_json(file_path: str) -> Dict[str, Any]:
    """Load a dictionary from a JSON file"""
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"File not found: {file_path}")
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)

def append_jsonl(records: Iterable[Dict[str, Any]], file_path: str):
    """Append records to a JSON Lines file, one object per line"""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(file_path, 'a', encoding='utf-8') as f:
        for record in records:
            f.write(canonical_json(record) + '\n')

def read_jsonl(file_path: str) -> List[Dict[str, Any]]:
    """Load all records of a JSON Lines file"""
    if not os.path.exists(file_path):
        return []
    records = []
    with open(file_path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
