"""
配置文件管理模块
支持JSON配置文件与命令行风格的 key = value 配置文件
"""
import os
import json
import copy
from pathlib import Path
from typing import Dict, Any, Optional


# key = value 配置文件中的命令行参数名到配置键的映射
FLAG_KEYS = {
    "eta": "search.eta",
    "kappa": "search.kappa",
    "delta-h": "search.delta_h",
    "delta_h": "search.delta_h",
    "max-candidates": "search.max_candidates",
    "n": "runtime.explorers",
    "explorers": "runtime.explorers",
    "m": "runtime.servers",
    "servers": "runtime.servers",
    "mode": "runtime.mode",
    "backend": "runtime.backend",
    "timeout": "runtime.timeout",
    "cache-size": "runtime.cache_size",
    "format": "data.format",
    "total": "data.total",
    "seed": "data.seed",
    "workers": "bench.workers",
    "repetitions": "bench.repetitions",
    "modes": "bench.modes",
    "alpha": "plan.alpha",
    "md": "plan.memory_mb",
    "log-path": "logging.log_path",
    "log-level": "logging.level",
}


class Config:
    """配置管理类"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置

        Args:
            config_path: 配置文件路径，为None时仅使用默认配置
        """
        self.config_path = Path(config_path) if config_path else None
        self.config: Dict[str, Any] = {}
        self.load_config()

    def load_config(self):
        """加载配置文件，文件中的值覆盖默认值"""
        self.config = self._get_default_config()
        if self.config_path is None:
            return

        if self.config_path.exists():
            if self.config_path.suffix.lower() == ".json":
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    loaded = json.load(f)
                if not isinstance(loaded, dict):
                    raise ValueError(f"配置文件顶层必须是对象: {self.config_path}")
                _deep_merge(self.config, loaded)
            else:
                for key, value in _parse_key_value(self.config_path).items():
                    self.set(key, value, save=False)
        elif self.config_path.suffix.lower() == ".json":
            # 首次运行时写出默认配置
            self.save_config()
        else:
            raise ValueError(f"配置文件不存在: {self.config_path}")

    def save_config(self):
        """保存配置文件（JSON）"""
        if self.config_path is None:
            return
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_path, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=2, ensure_ascii=False)

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return {
            "search": {
                "eta": 3,  # 最大团规模 η
                "kappa": 1,  # 最大前瞻链接数 κ
                "delta_h": 0.003,  # 熵减阈值（比特/样本）
                "max_candidates": None  # 每轮候选数上限，None表示不限
            },
            "runtime": {
                "mode": "two-stage",  # 可选: "sequential", "even", "two-stage"
                "explorers": 1,
                "servers": 0,
                "backend": os.getenv("DMN_BACKEND", "thread"),  # thread 或 process
                "timeout": 300.0,  # 等待工作者消息的超时（秒）
                "cache_size": 4096  # 每个探索者的熵缓存条目数，0表示不限
            },
            "data": {
                "format": "text",  # text 或 binary
                "total": 10000,
                "seed": 1
            },
            "bench": {
                "workers": [1, 2, 4],
                "repetitions": 3,
                "backend": "process",
                "modes": ["even", "two-stage"]
            },
            "plan": {
                "alpha": 0.005,
                "memory_mb": None
            },
            "logging": {
                "level": "INFO",
                "log_path": os.getenv("DMN_LOG_PATH", ""),
                "max_bytes": 5 * 1024 * 1024,
                "backup_count": 3
            }
        }

    def get(self, key: str, default: Any = None) -> Any:
        """获取配置值，支持点号分隔的嵌套键"""
        keys = key.split('.')
        value = self.config
        for k in keys:
            if isinstance(value, dict):
                value = value.get(k)
                if value is None:
                    return default
            else:
                return default
        return value

    def set(self, key: str, value: Any, save: bool = True):
        """设置配置值，支持点号分隔的嵌套键"""
        keys = key.split('.')
        config = self.config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value
        if save and self.config_path is not None and self.config_path.suffix.lower() == ".json":
            self.save_config()


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]):
    """将override递归合并进base"""
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


def _parse_key_value(path: Path) -> Dict[str, Any]:
    """
    解析 key = value 配置文件

    Args:
        path: 配置文件路径

    Returns:
        点号配置键到值的字典
    """
    settings: Dict[str, Any] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ValueError(f"{path}:{line_number} 缺少 '=': {raw.strip()}")
            key, text = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ValueError(f"{path}:{line_number} 配置键为空")
            settings[FLAG_KEYS.get(key, key)] = _parse_value(text)
    return settings


def _parse_value(text: str) -> Any:
    """按JSON标量/列表解析，失败时逗号分隔视为列表，否则为字符串"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if ',' in text:
        return [_parse_value(part.strip()) for part in text.split(',') if part.strip()]
    return text
