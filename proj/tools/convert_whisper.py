# Copyright 2026 The LayerTag Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Convert a Hugging Face Whisper checkpoint into a .watm model file.

    python tools/convert_whisper.py --model openai/whisper-large-v2 --output weights/large.watm --model-id large

--model accepts a local directory saved with save_pretrained or a hub name
already present in the local cache.
"""

import argparse
import json
import struct
import sys

import numpy as np

MAGIC = b"WATM"
FORMAT_VERSION = 1


def dims_from_config(config):
    if config.encoder_ffn_dim != 4 * config.d_model or config.decoder_ffn_dim != 4 * config.d_model:
        raise ValueError("feed-forward width must be 4x the model width")
    return {
        "n_mels": config.num_mel_bins,
        "n_audio_ctx": config.max_source_positions,
        "n_audio_state": config.d_model,
        "n_audio_head": config.encoder_attention_heads,
        "n_audio_layer": config.encoder_layers,
        "n_text_ctx": config.max_target_positions,
        "n_text_state": config.d_model,
        "n_text_head": config.decoder_attention_heads,
        "n_text_layer": config.decoder_layers,
        "n_vocab": config.vocab_size,
    }


def token_spec(config, generation_config=None, tokenizer=None):
    eot = config.eos_token_id
    sot = config.decoder_start_token_id
    prompt = [sot]
    suppress, begin_suppress = [], []
    if generation_config is not None:
        multilingual = getattr(generation_config, "is_multilingual", False)
        if multilingual:
            prompt.append(generation_config.lang_to_id["<|en|>"])
            prompt.append(generation_config.task_to_id["transcribe"])
        no_ts = getattr(generation_config, "no_timestamps_token_id", None)
        if no_ts is not None:
            prompt.append(no_ts)
        suppress = list(getattr(generation_config, "suppress_tokens", None) or [])
        begin_suppress = list(getattr(generation_config, "begin_suppress_tokens", None) or [])
    return {
        "eot": int(eot),
        "sot": int(sot),
        "prompt": [int(t) for t in prompt],
        "suppress": [int(t) for t in suppress],
        "begin_suppress": [int(t) for t in begin_suppress],
        "first_special": int(eot),
    }


def byte_vocab():
    """Byte-level symbols for ids 0..255, matching the GPT-2 byte encoder."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    table = dict(zip(bs, cs))
    return [chr(table[b]) for b in range(256)]


def state_tensors(model):
    out = []
    for name, tensor in model.state_dict().items():
        if name == "proj_out.weight":
            continue  # tied to decoder.embed_tokens.weight
        if not name.startswith("model."):
            raise ValueError("unexpected tensor " + name)
        out.append((name[len("model."):], tensor.detach().cpu().float().numpy()))
    return out


def write_model(path, model_id, dims, tokens, vocab, tensors, f16=False):
    header = json.dumps({"model_id": model_id, "dims": dims, "tokens": tokens, "vocab": vocab}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(tensors)))
        for name, array in tensors:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            f.write(struct.pack("<" + "Q" * array.ndim, *array.shape))
            f.write(struct.pack("<B", 1 if f16 else 0))
            f.write(np.ascontiguousarray(array, dtype="<f2" if f16 else "<f4").tobytes())


def convert_model(model, path, model_id, vocab, generation_config=None, f16=False):
    config = model.config
    write_model(path, model_id, dims_from_config(config), token_spec(config, generation_config), vocab,
                state_tensors(model), f16)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", required=True, help="checkpoint directory or cached hub name")
    parser.add_argument("--output", required=True)
    parser.add_argument("--model-id", help="id stored in the file (default: derived from --model)")
    parser.add_argument("--f16", action="store_true", help="store weights as float16")
    args = parser.parse_args(argv)

    from transformers import GenerationConfig, WhisperForConditionalGeneration, WhisperTokenizer

    model = WhisperForConditionalGeneration.from_pretrained(args.model)
    tokenizer = WhisperTokenizer.from_pretrained(args.model)
    try:
        generation_config = GenerationConfig.from_pretrained(args.model)
    except OSError:
        generation_config = None
    eot = model.config.eos_token_id
    vocab = tokenizer.convert_ids_to_tokens(list(range(eot)))
    model_id = args.model_id or args.model.rstrip("/").split("/")[-1].replace("whisper-", "")
    convert_model(model, args.output, model_id, vocab, generation_config, args.f16)
    print(f"wrote {args.output} ({model_id}, {model.config.encoder_layers} layers x {model.config.d_model})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
