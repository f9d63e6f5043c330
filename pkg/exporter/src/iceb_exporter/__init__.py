"""Exporter producing ICEB embedding bundles from images and a
vision-language model with a captioner."""

from .dataset import DatasetError, ImageFolderDataset, load_image_folder
from .demo import make_demo_dataset
from .export import ExportJob, export, load_descriptors
from .models import HfClipVlm, ModelUnavailableError, ToyVlm, load_model
from .prompts import PromptError, caption_prompts
from .writer import ExportError, write_iceb

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "ExportError",
    "ExportJob",
    "HfClipVlm",
    "ImageFolderDataset",
    "ModelUnavailableError",
    "PromptError",
    "ToyVlm",
    "caption_prompts",
    "export",
    "load_descriptors",
    "load_image_folder",
    "load_model",
    "make_demo_dataset",
    "write_iceb",
]
