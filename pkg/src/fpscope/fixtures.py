"""Bundled demo corpus: six SDKs, four apps and the configuration to run them.

Two SDKs reproduce the crossover-flow scenario: a collector that gathers
three signals and sends them out, and a network dependency that reads three
more signals of its own and encrypts what it is given. The other four form
the version-conflict case M:A:1 -> {N:B:1, P:C:1}, N:B:1 -> P:C:2.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .ir import SdkIR, parse_ir, render_ir

COLLECTOR = """\
sdk com.fp:collector:1.0
class com.fp.collector.Collector
method com.fp.collector.Collector.collect public sig="(android.content.Context)->void" params=r0
  invoke_static r1 api:android.os.Build.getSerial
  invoke_static r2 api:android.provider.Settings$Secure.getString r0
  load_static r3 field:com.fp.collector.Collector.carrier
  binary_op r4 r1,r2
  binary_op r5 r4,r3
  const_string r6 "https://collect.fp-demo.example/v1/device"
  invoke_static r7 api:java.net.URL.openConnection r6
  invoke_virtual api:java.io.OutputStream.write r7,r5
  return_void
method com.fp.collector.Collector.sync public sig="(android.content.Context)->void" params=r0
  invoke_virtual r1 api:android.telephony.TelephonyManager.getNetworkOperator r0
  store_static field:com.fp.collector.Collector.carrier r1
  invoke_static callee:com.fp.net.Uploader.upload r1
  return_void
"""

NETLIB = """\
sdk com.fp:netlib:1.0
class com.fp.net.Uploader
method com.fp.net.Uploader.upload public sig="(java.lang.String)->void" params=r0
  invoke_static r1 api:android.os.Build.getRadioVersion
  invoke_static r2 api:java.util.Locale.getDefault
  binary_op r3 r1,r2
  invoke_static r4 callee:com.fp.net.Battery.level
  binary_op r5 r3,r4
  binary_op r6 r5,r0
  const_string r7 "AES/GCM/NoPadding"
  invoke_static r8 api:javax.crypto.Cipher.getInstance r7
  invoke_virtual r9 api:javax.crypto.Cipher.doFinal r8,r6
  return_void
class com.fp.net.Battery
method com.fp.net.Battery.level nonpublic sig="()->int" params=
  invoke_virtual r0 api:android.os.BatteryManager.getIntProperty
  return r0
"""

M_A_1 = """\
sdk M:A:1
class m.a.Core
method m.a.Core.start public sig="(android.app.Application)->void" params=r0
  const_string r1 "m-a-core-bootstrap"
  invoke_static r2 api:android.util.Log.i r1
  invoke_static callee:n.b.Helper.help r0
  invoke_static callee:p.c.Store.put r1
  return_void
"""

N_B_1 = """\
sdk N:B:1
class n.b.Helper
method n.b.Helper.help public sig="(android.app.Application)->void" params=r0
  const_string r1 "n-b-helper-config.json"
  invoke_virtual r2 api:android.content.Context.getAssets r0
  invoke_virtual r3 api:android.content.res.AssetManager.open r2,r1
  invoke_static callee:p.c.Store.put r1
  return_void
"""

P_C_1 = """\
sdk P:C:1
class p.c.Store
method p.c.Store.put public sig="(java.lang.String)->void" params=r0
  const_string r1 "p-c-store-v1"
  invoke_static r2 api:android.content.SharedPreferences.edit r1
  invoke_interface r3 api:android.content.SharedPreferences$Editor.putString r2,r1,r0
  invoke_interface api:android.content.SharedPreferences$Editor.apply r3
  return_void
"""

P_C_2 = """\
sdk P:C:2
class p.c.Store
method p.c.Store.put public sig="(java.lang.String)->void" params=r0
  const_string r1 "p-c-store-v2"
  new_instance r2
  invoke_direct api:java.util.concurrent.ConcurrentHashMap.<init> r2
  invoke_virtual r3 api:java.util.concurrent.ConcurrentHashMap.put r2,r1,r0
  monitor_enter r2
  monitor_exit r2
  return_void
"""

SDK_SOURCES = {
    "com.fp_collector_1.0": COLLECTOR,
    "com.fp_netlib_1.0": NETLIB,
    "M_A_1": M_A_1,
    "N_B_1": N_B_1,
    "P_C_1": P_C_1,
    "P_C_2": P_C_2,
}

MANIFESTS = [
    {"coordinate": "com.fp:collector:1.0", "dependencies": ["com.fp:netlib:1.0"]},
    {"coordinate": "com.fp:netlib:1.0", "dependencies": []},
    {"coordinate": "M:A:1", "dependencies": ["N:B:1", "P:C:1"]},
    {"coordinate": "N:B:1", "dependencies": ["P:C:2"]},
    {"coordinate": "P:C:1", "dependencies": []},
    {"coordinate": "P:C:2", "dependencies": []},
]

TAINT_CONFIG = {
    "sources": {
        "android.os.Build.getSerial": "serial",
        "android.provider.Settings$Secure.getString": "android_id",
        "android.telephony.TelephonyManager.getNetworkOperator": "carrier",
        "android.os.Build.getRadioVersion": "radio_version",
        "java.util.Locale.getDefault": "locale",
        "android.os.BatteryManager.getIntProperty": "battery_level",
        "android.location.LocationManager.getLastKnownLocation": "last_location",
    },
    "sinks": {
        "java.io.OutputStream.write": "NETWORK",
        "javax.crypto.Cipher.doFinal": "ENCRYPTION",
    },
    "propagators": ["java.lang.StringBuilder.append", "java.lang.String.valueOf"],
}

FINGERPRINT_RULE = {
    "name": "fingerprinting",
    "sourceGroups": [sorted(set(TAINT_CONFIG["sources"].values()))],
    "sinkGroups": ["ENCRYPTION", "NETWORK"],
    "minDistinctSources": 20,
}

LABELS_CSV = """\
coordinate,label,subLabel
com.fp:collector:1.0,SECURITY_AND_AUTHENTICATION,SECURITY_ANTI_FRAUD
com.fp:netlib:1.0,TOOLS_OTHER,OTHER
M:A:1,ANALYTICS,APP_HEALTH
N:B:1,UNCLEAR_UNFOUND,
P:C:1,TOOLS_OTHER,OTHER
P:C:2,TOOLS_OTHER,OTHER
"""

SIGNAL_MAP_CSV = """\
api,class
android.os.Build.getSerial,OTHER
android.provider.Settings$Secure.getString,OTHER
android.telephony.TelephonyManager.getNetworkOperator,LOCATION_COARSE
android.os.Build.getRadioVersion,OTHER
java.util.Locale.getDefault,LOCATION_COARSE
android.os.BatteryManager.getIntProperty,OTHER
android.location.LocationManager.getLastKnownLocation,LOCATION_FINE
android.accounts.AccountManager.getAccounts,ACCOUNT_LIST
android.app.usage.UsageStatsManager.queryUsageStats,APP_USAGE
"""

RATINGS_CSV = """\
item,rater1,rater2,rater3
com.fp:collector,SECURITY_AND_AUTHENTICATION,SECURITY_AND_AUTHENTICATION,ADS
com.fp:netlib,TOOLS_OTHER,TOOLS_OTHER,TOOLS_OTHER
M:A,ANALYTICS,ANALYTICS,
N:B,UNCLEAR_UNFOUND,TOOLS_OTHER,UNCLEAR_UNFOUND
P:C,TOOLS_OTHER,TOOLS_OTHER,TOOLS_OTHER
"""

# appId -> (category, audience, SDK sources embedded)
APPS = {
    "app.finance.wallet": ("Finance", 5_000_000, ["com.fp_collector_1.0", "com.fp_netlib_1.0"]),
    "app.game.puzzle": ("Game", 250_000, ["com.fp_collector_1.0", "com.fp_netlib_1.0", "P_C_1"]),
    "app.tools.flashlight": ("Tools", 80_000, ["M_A_1", "N_B_1", "P_C_1"]),
    "app.finance.tiny": ("Finance", 9_000, ["M_A_1"]),
}

CONFIG_TOML = """\
# demo pipeline configuration; every key can be overridden on the command line
corpus = "corpus"
manifests = "manifests"
apps = "apps.jsonl"
app_code = "apps"
labels = "labels.csv"
signal_map = "signals.csv"
ratings = "ratings.csv"
taint_config = "taint.json"
rule = "rule.json"
eta = 0.2
gamma = 0.55
threshold = 3
context_depth = 1
min_audience = 10000
top_k = 1000
scope = "main-only"
format = "json"
"""


def coflow_sdks() -> dict[str, SdkIR]:
    return {"collector": parse_ir(COLLECTOR), "netlib": parse_ir(NETLIB)}


def conflict_manifests() -> list[dict]:
    return [m for m in MANIFESTS if not m["coordinate"].startswith("com.fp")]


def obfuscate(sdk_texts: list[str], app_id: str) -> str:
    """Merge SDK documents into one app document with every class and method renamed."""
    sdks = [parse_ir(t) for t in sdk_texts]
    class_names: dict[str, str] = {}
    method_names: dict[str, str] = {}
    for sdk in sdks:
        for cls in sdk.classes:
            cname = f"o.{_short(len(class_names))}"
            class_names[cls.id] = cname
            for j, m in enumerate(cls.methods):
                method_names[m.id] = f"{cname}.{_short(j)}"
    lines = [f"sdk app:{app_id}:1"]
    for sdk in sdks:
        body = render_ir(sdk).splitlines()[1:]
        for line in body:
            if line.startswith("class "):
                line = "class " + class_names[line.split()[1]]
            elif line.startswith("method "):
                parts = line.split(" ", 2)
                line = f"method {method_names[parts[1]]} {parts[2]}"
            else:
                line = re.sub(
                    r"callee:(\S+)", lambda mt: "callee:" + method_names.get(mt.group(1), mt.group(1)), line
                )
            lines.append(line)
    return "\n".join(lines) + "\n"


def _short(i: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        out = letters[r] + out
    return out


def emit(directory: Path | str) -> Path:
    """Write the demo corpus and a ready-to-run config.toml into `directory`."""
    root = Path(directory)
    for sub in ("corpus", "manifests", "apps"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for name, text in SDK_SOURCES.items():
        (root / "corpus" / f"{name}.ir").write_text(text, encoding="utf-8")
    for m in MANIFESTS:
        name = m["coordinate"].replace(":", "_")
        (root / "manifests" / f"{name}.json").write_text(json.dumps(m, indent=2) + "\n", encoding="utf-8")
    (root / "taint.json").write_text(json.dumps(TAINT_CONFIG, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (root / "rule.json").write_text(json.dumps(FINGERPRINT_RULE, indent=2) + "\n", encoding="utf-8")
    (root / "labels.csv").write_text(LABELS_CSV, encoding="utf-8")
    (root / "signals.csv").write_text(SIGNAL_MAP_CSV, encoding="utf-8")
    (root / "ratings.csv").write_text(RATINGS_CSV, encoding="utf-8")
    records = []
    for app_id, (category, audience, parts) in APPS.items():
        records.append(json.dumps({"appId": app_id, "category": category, "audienceSize": audience}))
        text = obfuscate([SDK_SOURCES[p] for p in parts], app_id)
        (root / "apps" / f"{app_id}.ir").write_text(text, encoding="utf-8")
    (root / "apps.jsonl").write_text("\n".join(records) + "\n", encoding="utf-8")
    (root / "config.toml").write_text(CONFIG_TOML, encoding="utf-8")
    return root
