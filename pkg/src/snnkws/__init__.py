"""Streaming spiking-neural-network keyword spotting: event-based audio
encoding, integer LIF inference, surrogate-gradient training, 8-bit
quantization and a benchmark harness with modeled energy accounting."""

from .afe import (AudioClip, AudioFrontend, EncoderConfig, EventRaster,
                  FilterbankConfig, bin_raster, design_filterbank,
                  encode_clip, encode_events, pad_clip, process_audio)
from .errors import ConfigError, DataError, SnnKwsError
from .model import (FloatModel, QuantizedModel, ReadoutTrace, SynNetSpec,
                    build_model, forward_int, lif_step_int, predict)
from .quantize import QuantReport, audit, auto_kappa, dequantize, quantize
from .train import (GradCheckResult, TrainConfig, forward_float, grad_check,
                    peak_loss, train)

__version__ = "0.1.0"
