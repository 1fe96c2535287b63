"""Deterministic synthetic app corpus for tests and demos.

Builds disassembled-style app trees (smali classes, a decoded manifest,
model assets), packs them as zip archives, and applies a consistent
renaming of app-defined identifiers that mimics obfuscation: class, method
and field names change while literals and framework names stay fixed.

Everything is driven by a seed so corpus content is reproducible
byte-for-byte across runs.
"""

from __future__ import annotations

import io
import random
import re
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

FileMap = Dict[str, Union[str, bytes]]

S1 = "S1_buffer"
S2 = "S2_bitmap"
S3 = "S3_media_image"


@dataclass(frozen=True)
class AppTruth:
    """Ground-truth labels for one generated app."""
    name: str
    kind: str                     # 's1' | 's2' | 's3' | 'negative' | 'nondl' | 'unscannable'
    renamed: bool
    is_dl: bool
    services: Tuple[str, ...]
    strategies: Tuple[str, ...]   # expected constructor-match strategies
    injectable: bool


@dataclass(frozen=True)
class CorpusEntry:
    path: Path
    truth: AppTruth


# ---------------------------------------------------------------------------
# smali class templates


def _buffer_wrapper(cls: str, fmt_line: str, rot_line: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;
.source "ImageHolder.java"


# instance fields
.field private zza:Ljava/nio/ByteBuffer;

.field private zzd:I

.field private zze:I

.field private zzf:I

.field private zzg:I


# direct methods
.method private constructor <init>(Ljava/nio/ByteBuffer;III)V
    .locals 1

    .line 1
    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    const-string v0, "image buffer must not be null"

    invoke-static {{p1, v0}}, Lcom/google/android/gms/common/internal/Preconditions;->checkNotNull(Ljava/lang/Object;Ljava/lang/Object;)Ljava/lang/Object;

    move-result-object v0

    check-cast v0, Ljava/nio/ByteBuffer;

    iput-object v0, p0, {cls}->zza:Ljava/nio/ByteBuffer;

    .line 2
    iput p2, p0, {cls}->zzd:I

    iput p3, p0, {cls}->zze:I

{rot_line}

    iput p4, p0, {cls}->zzf:I

{fmt_line}

    iput v0, p0, {cls}->zzg:I

    return-void
.end method

.method public static zzb(Ljava/nio/ByteBuffer;III){cls}
    .locals 1

    new-instance v0, {cls}

    invoke-direct {{v0, p0, p1, p2, p3}}, {cls}-><init>(Ljava/nio/ByteBuffer;III)V

    return-object v0
.end method
'''


def _bitmap_wrapper(cls: str, rot_line: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;
.source "ImageHolder.java"


# instance fields
.field private zza:Landroid/graphics/Bitmap;

.field private zzd:I

.field private zze:I

.field private zzf:I

.field private zzg:I


# direct methods
.method private constructor <init>(Landroid/graphics/Bitmap;I)V
    .locals 1

    .line 1
    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    invoke-static {{p1}}, Lcom/google/android/gms/common/internal/Preconditions;->checkNotNull(Ljava/lang/Object;)Ljava/lang/Object;

    move-result-object v0

    check-cast v0, Landroid/graphics/Bitmap;

    iput-object v0, p0, {cls}->zza:Landroid/graphics/Bitmap;

    .line 2
    invoke-virtual {{p1}}, Landroid/graphics/Bitmap;->getWidth()I

    move-result v0

    iput v0, p0, {cls}->zzd:I

    .line 3
    invoke-virtual {{p1}}, Landroid/graphics/Bitmap;->getHeight()I

    move-result v0

    iput v0, p0, {cls}->zze:I

{rot_line}

    iput p2, p0, {cls}->zzf:I

    const/4 p1, -0x1

    iput p1, p0, {cls}->zzg:I

    return-void
.end method

.method public static zzc(Landroid/graphics/Bitmap;I){cls}
    .locals 1

    new-instance v0, {cls}

    invoke-direct {{v0, p0, p1}}, {cls}-><init>(Landroid/graphics/Bitmap;I)V

    return-object v0
.end method
'''


def _media_wrapper(cls: str, rot_line: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;
.source "ImageHolder.java"


# instance fields
.field private zzb:Landroid/media/Image;

.field private zzd:I

.field private zze:I

.field private zzf:I

.field private zzg:I

.field private zzh:Landroid/graphics/Matrix;


# direct methods
.method private constructor <init>(Landroid/media/Image;III)V
    .locals 2

    .line 1
    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    iput-object p1, p0, {cls}->zzb:Landroid/media/Image;

    new-instance v0, Landroid/graphics/Matrix;

    invoke-direct {{v0}}, Landroid/graphics/Matrix;-><init>()V

    iput-object v0, p0, {cls}->zzh:Landroid/graphics/Matrix;

    .line 2
    iput p2, p0, {cls}->zzd:I

    iput p3, p0, {cls}->zze:I

{rot_line}

    iput p4, p0, {cls}->zzf:I

    const/16 v1, 0x23

    iput v1, p0, {cls}->zzg:I

    return-void
.end method

.method public static zzd(Landroid/media/Image;III){cls}
    .locals 1

    new-instance v0, {cls}

    invoke-direct {{v0, p0, p1, p2, p3}}, {cls}-><init>(Landroid/media/Image;III)V

    return-object v0
.end method
'''


def _client(pkg: str, wrapper: str, factory: str, factory_param: str,
            detector_owner: str, inference: str) -> str:
    cls = f"Lcom/{pkg}/MainActivity;"
    return f'''.class public {cls}
.super Landroid/app/Activity;
.source "MainActivity.java"


# instance fields
.field private detector:{detector_owner}


# virtual methods
.method public runDetection(Landroid/content/res/Resources;)V
    .locals 5

    const/high16 v1, 0x7f020000

    invoke-static {{p1, v1}}, Landroid/graphics/BitmapFactory;->decodeResource(Landroid/content/res/Resources;I)Landroid/graphics/Bitmap;

    move-result-object v0

    const/16 v2, 0x280

    const/16 v3, 0x140

    const/4 v4, 0x1

    invoke-static {{v0, v2, v3, v4}}, Landroid/graphics/Bitmap;->createScaledBitmap(Landroid/graphics/Bitmap;IIZ)Landroid/graphics/Bitmap;

    move-result-object v0

    const/16 v1, 0x5a

    invoke-static {{v0, v1}}, {wrapper}->{factory}({factory_param}I){wrapper}

    move-result-object v1

    iget-object v2, p0, {cls}->detector:{detector_owner}

    invoke-virtual {{v2, v1}}, {detector_owner}->{inference}({wrapper})Lcom/google/android/gms/tasks/Task;

    move-result-object v2

    return-void
.end method
'''


def _near_miss_s1(cls: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;


# instance fields
.field private zzd:I

.field private zzg:I


# direct methods
.method private constructor <init>(Ljava/nio/ByteBuffer;I)V
    .locals 1

    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    const-string v0, "buffer config"

    iput p2, p0, {cls}->zzd:I

    const/16 v0, 0x10

    iput v0, p0, {cls}->zzg:I

    return-void
.end method
'''


def _near_miss_s2(cls: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;


# instance fields
.field private zzd:I

.field private zze:I

.field private zzg:I


# direct methods
.method private constructor <init>(Landroid/graphics/Bitmap;)V
    .locals 1

    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    invoke-virtual {{p1}}, Landroid/graphics/Bitmap;->getWidth()I

    move-result v0

    iput v0, p0, {cls}->zzd:I

    invoke-virtual {{p1}}, Landroid/graphics/Bitmap;->getHeight()I

    move-result v0

    iput v0, p0, {cls}->zze:I

    const/4 v0, -0x2

    iput v0, p0, {cls}->zzg:I

    return-void
.end method
'''


def _near_miss_s3(cls: str) -> str:
    return f'''.class public final {cls}
.super Ljava/lang/Object;


# instance fields
.field private zzg:I

.field private zzh:Landroid/graphics/Matrix;

.field private zzi:I


# direct methods
.method private constructor <init>(Landroid/media/Image;I)V
    .locals 1

    invoke-direct {{p0}}, Ljava/lang/Object;-><init>()V

    new-instance v0, Landroid/graphics/Matrix;

    invoke-direct {{v0}}, Landroid/graphics/Matrix;-><init>()V

    iput-object v0, p0, {cls}->zzh:Landroid/graphics/Matrix;

    const/16 v0, 0x22

    iput v0, p0, {cls}->zzg:I

    const v0, 0x32315658

    iput v0, p0, {cls}->zzi:I

    return-void
.end method
'''


# Filler templates keyed by a short tag; each takes the class descriptor.

def _filler_codes(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# static fields
.field public static final LIMIT:I = 0x400

.field private static total:I


# direct methods
.method public static clamp(I)I
    .locals 2

    const/16 v0, 255

    const/4 v1, 0x0

    if-ltz p0, :cond_0

    if-le p0, v0, :cond_1

    return v0

    :cond_0
    return v1

    :cond_1
    return p0
.end method
'''


def _filler_switch(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static pick(I)I
    .locals 1

    packed-switch p0, :pswitch_data_0

    const/4 v0, 0x0

    return v0

    :pswitch_0
    const/4 v0, 0x1

    return v0

    :pswitch_1
    const/4 v0, 0x2

    return v0

    nop

    :pswitch_data_0
    .packed-switch 0x1
        :pswitch_0
        :pswitch_1
    .end packed-switch
.end method
'''


def _filler_array(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static table()[B
    .locals 1

    const/4 v0, 0x4

    new-array v0, v0, [B

    fill-array-data v0, :array_0

    return-object v0

    :array_0
    .array-data 1
        0x1t
        0x2t
        0x7ft
        -0x1t
    .end array-data
.end method
'''


def _filler_meta(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;
.source "Meta.java"

.annotation system Ldalvik/annotation/Signature;
    value = {{
        "Ljava/util/List<",
        "Ljava/lang/String;",
        ">;"
    }}
.end annotation


# virtual methods
.method public tag()Ljava/lang/String;
    .locals 1

    const-string v0, "tag: \\u00e9 \\"quoted\\" #hash"

    return-object v0
.end method
'''


def _filler_try(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static risky(Ljava/io/File;)Z
    .locals 2

    :try_start_0
    invoke-virtual {{p0}}, Ljava/io/File;->exists()Z

    move-result v0
    :try_end_0
    .catch Ljava/lang/SecurityException; {{:try_start_0 .. :try_end_0}} :catch_0

    return v0

    :catch_0
    move-exception v1

    const/4 v0, 0x0

    return v0
.end method
'''


def _filler_iface(cls: str) -> str:
    return f'''.class public interface abstract {cls}
.super Ljava/lang/Object;


# virtual methods
.method public abstract onEvent(I)V
.end method

.method public abstract onReset()V
.end method
'''


def _filler_wide(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# instance fields
.field private sum:J


# virtual methods
.method public total()J
    .locals 4

    iget-wide v0, p0, {cls}->sum:J

    const-wide/16 v2, 0x2

    add-long/2addr v0, v2

    return-wide v0
.end method
'''


def _filler_registers(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static max(II)I
    .registers 3

    if-ge p0, p1, :cond_0

    return p1

    :cond_0
    return p0
.end method

.method public static mix(I)I
    .registers 2

    const/16 v0, 180

    add-int/2addr v0, p0

    return v0
.end method
'''


def _filler_strings(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static label(I)Ljava/lang/String;
    .locals 1

    const-string v0, "idle"

    if-eqz p0, :cond_0

    const-string v0, "busy"

    :cond_0
    return-object v0
.end method
'''


def _filler_range(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static combine(III)I
    .locals 1

    add-int v0, p0, p1

    add-int/2addr v0, p2

    return v0
.end method

.method public static all(III)I
    .locals 1

    invoke-static/range {{p0 .. p2}}, {cls}->combine(III)I

    move-result v0

    return v0
.end method
'''


def _filler_loop(cls: str) -> str:
    return f'''.class public {cls}
.super Ljava/lang/Object;


# direct methods
.method public static spin(I)I
    .locals 1

    const/4 v0, 0x0

    :goto_0
    if-ge v0, p0, :cond_0

    add-int/lit8 v0, v0, 0x1

    goto :goto_0

    :cond_0
    return v0
.end method
'''


_FILLERS = [
    ("Codes", _filler_codes),
    ("Picker", _filler_switch),
    ("Tables", _filler_array),
    ("Meta", _filler_meta),
    ("Files", _filler_try),
    ("Listener", _filler_iface),
    ("Acc", _filler_wide),
    ("MathUtil", _filler_registers),
    ("Labels", _filler_strings),
    ("Ranges", _filler_range),
    ("Spinner", _filler_loop),
]


def _plain_activity(pkg: str) -> str:
    cls = f"Lcom/{pkg}/MainActivity;"
    return f'''.class public {cls}
.super Landroid/app/Activity;
.source "MainActivity.java"


# virtual methods
.method public onStart()V
    .locals 1

    invoke-super {{p0}}, Landroid/app/Activity;->onStart()V

    const-string v0, "started"

    return-void
.end method
'''


# ---------------------------------------------------------------------------
# manifest and assets

_REGISTRARS = {
    "face_detection": "com.google.mlkit.vision.face.internal.FaceRegistrar",
    "selfie_segmentation": "com.google.mlkit.vision.segmentation.internal.SegmentationRegistrar",
    "barcode": "com.google.mlkit.vision.barcode.internal.BarcodeRegistrar",
    "pose": "com.google.mlkit.vision.pose.internal.PoseRegistrar",
}


def build_manifest(package: str, services: Tuple[str, ...]) -> str:
    meta = "\n".join(
        f'            <meta-data android:name="com.google.firebase.components:{_REGISTRARS[s]}" '
        f'android:value="com.google.firebase.components.ComponentRegistrar"/>'
        for s in services)
    block = ""
    if services:
        block = (
            '        <service android:name="com.google.mlkit.common.internal.MlKitComponentDiscoveryService">\n'
            f"{meta}\n"
            "        </service>\n")
    return (
        '<?xml version="1.0" encoding="utf-8"?>\n'
        f'<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.{package}">\n'
        '    <application android:label="Demo">\n'
        f"{block}"
        f'        <activity android:name="com.{package}.MainActivity"/>\n'
        "    </application>\n"
        "</manifest>\n")


def _smali_path(descriptor: str) -> str:
    return "smali/" + descriptor[1:-1] + ".smali"


def _add_fillers(files: FileMap, pkg: str, rng: random.Random, count: int) -> None:
    for i in range(count):
        tag, fn = _FILLERS[rng.randrange(len(_FILLERS))]
        cls = f"Lcom/{pkg}/util/{tag}{i};"
        files[_smali_path(cls)] = fn(cls)


# ---------------------------------------------------------------------------
# app builders


def build_app_files(kind: str, index: int, rng: random.Random) -> Tuple[FileMap, AppTruth]:
    """Build one app as a path->content map plus its ground-truth labels."""
    pkg = f"demoapp{index:02d}"
    name = f"app{index:02d}_{kind}"
    files: FileMap = {}

    if kind == "nondl":
        files[_smali_path(f"Lcom/{pkg}/MainActivity;")] = _plain_activity(pkg)
        _add_fillers(files, pkg, rng, 8)
        files["AndroidManifest.xml"] = build_manifest(pkg, ())
        files["assets/logo.png"] = b"\x89PNG\r\n\x1a\n" + rng.randbytes(24)
        truth = AppTruth(name, kind, False, False, (), (), False)
        return files, truth

    wrapper = f"Lcom/{pkg}/vision/ImageHolder;"

    if kind == "s1":
        use_17 = index % 2 == 1
        fmt_line = ("    const/16 v0, 0x11" if use_17 else "    const v0, 0x32315659")
        rot_line = ("    const/16 p4, 180" if use_17 else "    const/16 p4, 0xb4")
        files[_smali_path(wrapper)] = _buffer_wrapper(wrapper, fmt_line, rot_line)
        files[_smali_path(f"Lcom/{pkg}/MainActivity;")] = _client(
            pkg, wrapper, "zzb", "Ljava/nio/ByteBuffer;",
            "Lorg/tensorflow/lite/support/vision/Runner;", "run")
        services = ("selfie_segmentation",) if use_17 else ("face_detection",)
        model = ("assets/seg_model.tfl", b"TFL3" + rng.randbytes(40)) if use_17 \
            else ("assets/models/detector.tflite", b"TFL3" + rng.randbytes(40))
        strategies = (S1,)
    elif kind == "s2":
        rot_line = "    const/16 p2, 0xb4"
        files[_smali_path(wrapper)] = _bitmap_wrapper(wrapper, rot_line)
        files[_smali_path(f"Lcom/{pkg}/MainActivity;")] = _client(
            pkg, wrapper, "zzc", "Landroid/graphics/Bitmap;",
            "Lcom/google/mlkit/vision/face/FaceDetector;", "process")
        services = ("face_detection", "selfie_segmentation") if index % 2 else ("face_detection",)
        model = ("assets/Detector.TFLITE", b"TFL3" + rng.randbytes(40)) if index % 2 == 0 \
            else ("assets/net.lite", b"TFL3" + rng.randbytes(40))
        strategies = (S2,)
    elif kind == "s3":
        rot_line = "    const/16 p4, 0xb4"
        files[_smali_path(wrapper)] = _media_wrapper(wrapper, rot_line)
        files[_smali_path(f"Lcom/{pkg}/MainActivity;")] = _client(
            pkg, wrapper, "zzd", "Landroid/media/Image;",
            "Lcom/google/mlkit/vision/barcode/BarcodeScanner;", "process")
        services = ("barcode",) if index % 2 == 0 else ("face_detection",)
        # One s3 flavor has no model asset: identified through API references.
        model = ("assets/scan.tflite", b"TFL3" + rng.randbytes(40)) if index % 2 == 0 else None
        strategies = (S3,)
    elif kind == "negative":
        flavor = index % 3
        holder = f"Lcom/{pkg}/vision/Holder;"
        if flavor == 0:
            files[_smali_path(holder)] = _near_miss_s1(holder)
        elif flavor == 1:
            files[_smali_path(holder)] = _near_miss_s2(holder)
        else:
            files[_smali_path(holder)] = _near_miss_s3(holder)
        files[_smali_path(f"Lcom/{pkg}/MainActivity;")] = _client(
            pkg, holder, "missingFactory", "Landroid/graphics/Bitmap;",
            "Lcom/google/mlkit/vision/face/FaceDetector;", "process")
        services = ("face_detection",)
        model = ("assets/model.tflite", b"TFL3" + rng.randbytes(40))
        strategies = ()
    else:
        raise ValueError(f"unknown app kind '{kind}'")

    _add_fillers(files, pkg, rng, 9 if kind != "negative" else 8)
    files["AndroidManifest.xml"] = build_manifest(pkg, services)
    if model is not None:
        files[model[0]] = model[1]
    truth = AppTruth(name, kind, False, True, services, strategies,
                     injectable=bool(strategies))
    return files, truth


# The negative client's factory never exists; keep its descriptor arity legal.
# (missingFactory takes (Bitmap, I) like the s2 factory.)


# ---------------------------------------------------------------------------
# identifier renaming (simulated obfuscation)

_CLASS_DECL_RE = re.compile(r"(?m)^\.class\s+(?:[\w-]+\s+)*(\S+)\s*$")
_FIELD_NAME_RE = re.compile(r"(?m)^\s*\.field\s+(?:[\w-]+\s+)*([^:\s]+):(\S+)")
_METHOD_NAME_RE = re.compile(r"(?m)^\s*\.method\s+(?:[\w-]+\s+)*([^(\s]+)\(")

_RENAME_KEEP = {"<init>", "<clinit>"}


def _short_names(rng: random.Random, avoid: set) -> "callable":
    letters = "abcdefghijklmnopqrstuvwxyz"

    def gen() -> str:
        while True:
            n = rng.choice((1, 1, 2))
            cand = "".join(rng.choice(letters) for _ in range(n))
            if cand not in avoid:
                avoid.add(cand)
                return cand
    return gen


def alpha_rename(files: FileMap, rng: random.Random) -> Tuple[FileMap, dict]:
    """Consistently rename app-defined classes, methods and fields.

    Framework descriptors, literals, strings and file content outside smali
    stay untouched; smali files move to the paths of their new class names.
    Returns the new file map and the mapping used.
    """
    smali = {p: t for p, t in files.items()
             if p.endswith(".smali") and isinstance(t, str)}

    app_classes: List[str] = []
    for text in smali.values():
        m = _CLASS_DECL_RE.search(text)
        if m:
            app_classes.append(m.group(1))
    app_set = set(app_classes)

    member_names = set()
    for text in smali.values():
        member_names.update(m.group(1) for m in _FIELD_NAME_RE.finditer(text))
        member_names.update(m.group(1) for m in _METHOD_NAME_RE.finditer(text))
    avoid = set(member_names)
    avoid.update(_RENAME_KEEP)
    gen = _short_names(rng, avoid)

    class_map: Dict[str, str] = {}
    taken = set(app_set)
    for desc in sorted(app_set):
        while True:
            depth = rng.choice((1, 2, 2, 3))
            cand = "L" + "/".join(gen() for _ in range(depth)) + ";"
            if cand not in taken:
                taken.add(cand)
                class_map[desc] = cand
                break

    field_map: Dict[Tuple[str, str], str] = {}
    method_map: Dict[Tuple[str, str], str] = {}
    for path, text in smali.items():
        m = _CLASS_DECL_RE.search(text)
        if not m or m.group(1) not in app_set:
            continue
        owner = m.group(1)
        for fm in _FIELD_NAME_RE.finditer(text):
            field_map[(owner, fm.group(1))] = gen()
        for mm in _METHOD_NAME_RE.finditer(text):
            if mm.group(1) not in _RENAME_KEEP:
                method_map[(owner, mm.group(1))] = gen()

    out: FileMap = {}
    for path, content in files.items():
        if path not in smali:
            out[path] = content
            continue
        text = smali[path]
        own = _CLASS_DECL_RE.search(text).group(1)

        # Member references are owner-qualified, so rewrite those first.
        for (owner, old), new in field_map.items():
            text = text.replace(f"{owner}->{old}:", f"{owner}->{new}:")
        for (owner, old), new in method_map.items():
            text = text.replace(f"{owner}->{old}(", f"{owner}->{new}(")
        # Declarations carry no owner; qualify by the declaring file.
        for (owner, old), new in field_map.items():
            if owner == own:
                text = re.sub(rf"(?m)^(\s*\.field\s+(?:[\w-]+\s+)*){re.escape(old)}:",
                              rf"\g<1>{new}:", text)
        for (owner, old), new in method_map.items():
            if owner == own:
                text = re.sub(rf"(?m)^(\s*\.method\s+(?:[\w-]+\s+)*){re.escape(old)}\(",
                              rf"\g<1>{new}(", text)
        for old, new in class_map.items():
            text = text.replace(old, new)

        out[_smali_path(class_map[own])] = text

    mapping = {
        "classes": class_map,
        "fields": {f"{o}->{n}": v for (o, n), v in field_map.items()},
        "methods": {f"{o}->{n}": v for (o, n), v in method_map.items()},
    }
    return out, mapping


# ---------------------------------------------------------------------------
# packing and corpus assembly


def zip_app(files: FileMap) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for path in sorted(files):
            data = files[path]
            zf.writestr(path, data if isinstance(data, bytes) else data.encode("utf-8"))
    return buf.getvalue()


def write_tree(files: FileMap, root: Path) -> None:
    for path in sorted(files):
        target = root / path
        target.parent.mkdir(parents=True, exist_ok=True)
        data = files[path]
        if isinstance(data, bytes):
            target.write_bytes(data)
        else:
            target.write_text(data, encoding="utf-8")


def corrupt_apk_bytes(rng: random.Random) -> bytes:
    # Starts like a zip but the central directory is garbage.
    return b"PK\x03\x04" + rng.randbytes(64)


def build_corpus(root: Path, seed: int = 2024) -> List[CorpusEntry]:
    """Materialize the full labelled corpus under ``root`` as .apk archives.

    Layout: 12 injectable apps (two per strategy, each in a plain and a
    renamed variant), 3 near-miss negatives, 5 non-DL apps, 3 corrupt
    archives.
    """
    rng = random.Random(seed)
    root.mkdir(parents=True, exist_ok=True)
    entries: List[CorpusEntry] = []
    index = 0

    plain: List[Tuple[FileMap, AppTruth]] = []
    for kind in ("s1", "s1", "s2", "s2", "s3", "s3"):
        files, truth = build_app_files(kind, index, rng)
        plain.append((files, truth))
        entries.append(_write_app(root, files, truth))
        index += 1

    for files, truth in plain:
        renamed_files, _ = alpha_rename(files, rng)
        renamed_truth = AppTruth(
            name=f"app{index:02d}_{truth.kind}r", kind=truth.kind, renamed=True,
            is_dl=truth.is_dl, services=truth.services,
            strategies=truth.strategies, injectable=truth.injectable)
        entries.append(_write_app(root, renamed_files, renamed_truth))
        index += 1

    for _ in range(3):
        files, truth = build_app_files("negative", index, rng)
        entries.append(_write_app(root, files, truth))
        index += 1

    for _ in range(5):
        files, truth = build_app_files("nondl", index, rng)
        entries.append(_write_app(root, files, truth))
        index += 1

    for _ in range(3):
        name = f"app{index:02d}_unscannable"
        path = root / f"{name}.apk"
        path.write_bytes(corrupt_apk_bytes(rng))
        entries.append(CorpusEntry(path, AppTruth(name, "unscannable", False,
                                                  False, (), (), False)))
        index += 1

    return entries


def _write_app(root: Path, files: FileMap, truth: AppTruth) -> CorpusEntry:
    path = root / f"{truth.name}.apk"
    path.write_bytes(zip_app(files))
    return CorpusEntry(path, truth)
