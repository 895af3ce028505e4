"""
LLM Dictionary - Realistic parameter values suggested by a Large Language Model
Supports a local JSON dictionary, a generic completion endpoint, OpenAI and Google Gemini
"""

import json
import logging
from typing import Any, Dict, List, Mapping, Optional

import openai
import requests

from config.settings import LLMConfig
from .oas_model import ApiModel, OperationSpec, ParameterSpec, normalize_name
from utils import read_json, write_json

logger = logging.getLogger(__name__)

GEMINI_DEFAULT_MODEL = "gemini-2.5-flash"


def _scalars(values: Any) -> List[Any]:
    if not isinstance(values, list):
        return []
    return [v for v in values if isinstance(v, (str, int, float, bool)) and v is not None]


def load_llm_dictionary(file_path: str) -> Dict[str, List[Any]]:
    """
    Load a dictionary file: a JSON object mapping parameter name to an array of values

    Raises:
        ValueError: The file is not a JSON object of arrays
    """
    data = read_json(file_path)
    if not isinstance(data, dict):
        raise ValueError(f"{file_path}: LLM dictionary must be a JSON object")
    dictionary: Dict[str, List[Any]] = {}
    for name, values in data.items():
        if not isinstance(values, list):
            raise ValueError(f"{file_path}: entry '{name}' is not an array")
        kept = _scalars(values)
        if kept:
            dictionary.setdefault(normalize_name(str(name)), []).extend(kept)
    logger.info(f"Loaded LLM dictionary with {len(dictionary)} parameters from {file_path}")
    return dictionary


def save_llm_dictionary(file_path: str, dictionary: Mapping[str, List[Any]]):
    write_json(file_path, {name: list(values) for name, values in sorted(dictionary.items())})


def parse_values(text: str) -> List[Any]:
    """Extract the JSON array from a model reply, tolerating code fences and chatter"""
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end <= start:
        raise ValueError("reply contains no JSON array")
    return _scalars(json.loads(text[start:end + 1]))


class LLMDictionaryBuilder:
    """Ask an LLM for realistic values of every parameter of an API"""

    def __init__(self, config: LLMConfig):
        """
        Initialize dictionary builder

        Args:
            config: LLM settings (provider "endpoint", "openai" or "gemini")
        """
        self.config = config
        self.provider = config.provider.lower()
        self.api_key = config.api_key
        self._setup_client()

    def _setup_client(self):
        """Setup API client"""
        if self.provider == "endpoint":
            if not self.config.endpoint_url:
                raise ValueError("Endpoint provider needs an endpoint URL")
            self.session = requests.Session()
            return

        if not self.api_key:
            raise ValueError(f"Cannot find {self.provider.upper()} API key")

        if self.provider == "openai":
            self.client = openai.OpenAI(api_key=self.api_key, timeout=self.config.timeout)
        elif self.provider == "gemini":
            import google.generativeai as genai
            genai.configure(api_key=self.api_key)
            model = self.config.model if self.config.model.startswith("gemini") else GEMINI_DEFAULT_MODEL
            self.model = genai.GenerativeModel(model)
        else:
            raise ValueError(f"Unsupported LLM provider: {self.provider}")

    def build_prompt(self, operation: OperationSpec, param: ParameterSpec) -> str:
        """Prompt carrying the operation and parameter context"""
        return f"""
You are helping to test a REST API.
Operation: {operation.method} {operation.path}
{f"Operation description: {operation.description}" if operation.description else ""}
Parameter name: {param.name}
Parameter type: {param.schema.kind}{f" ({param.schema.format})" if param.schema.format else ""}
{f"Parameter description: {param.description}" if param.description else ""}

Suggest at least {self.config.min_values} realistic, diverse values for this parameter.
Return only a JSON array of values, without any explanation.
"""

    def suggest_values(self, operation: OperationSpec, param: ParameterSpec) -> List[Any]:
        """
        Values for one parameter; a failed request yields an empty list

        Args:
            operation: Operation the parameter belongs to
            param: Parameter to ask about

        Returns:
            List: Scalar values suggested by the model
        """
        prompt = self.build_prompt(operation, param)
        try:
            if self.provider == "endpoint":
                values = self._complete_with_endpoint(prompt)
            elif self.provider == "openai":
                values = parse_values(self._complete_with_openai(prompt))
            else:
                values = parse_values(self._complete_with_gemini(prompt))
        except Exception as e:
            logger.warning(f"LLM values for {operation.operation_id}.{param.name} unavailable: {str(e)}")
            return []

        if len(values) < self.config.min_values:
            logger.warning(
                f"LLM returned {len(values)} values for {operation.operation_id}.{param.name}, "
                f"asked for {self.config.min_values}"
            )
        return values

    def _complete_with_endpoint(self, prompt: str) -> List[Any]:
        """POST {prompt} and expect {values: [...]}"""
        response = self.session.post(
            self.config.endpoint_url,
            json={"prompt": prompt, "min_values": self.config.min_values},
            timeout=self.config.timeout,
        )
        response.raise_for_status()
        payload = response.json()
        if not isinstance(payload, dict) or not isinstance(payload.get("values"), list):
            raise ValueError("endpoint reply has no 'values' array")
        return _scalars(payload["values"])

    def _complete_with_openai(self, prompt: str) -> str:
        """Complete using OpenAI API"""
        response = self.client.chat.completions.create(
            model=self.config.model,
            messages=[
                {"role": "system", "content": "You are a test data assistant that answers with JSON arrays only."},
                {"role": "user", "content": prompt}
            ],
            temperature=self.config.temperature
        )
        return response.choices[0].message.content.strip()

    def _complete_with_gemini(self, prompt: str) -> str:
        """Complete using Gemini API"""
        response = self.model.generate_content(prompt)
        return response.text.strip()

    def build(self, api: ApiModel) -> Dict[str, List[Any]]:
        """
        Query every parameter of the API once and merge the answers by normalized name

        Returns:
            Dict[str, List]: normalized name -> values
        """
        dictionary: Dict[str, List[Any]] = {}
        params = [(op, p) for op in api.operations for p in op.parameters]
        for i, (operation, param) in enumerate(params):
            values = self.suggest_values(operation, param)
            if values:
                bucket = dictionary.setdefault(param.normalized_name, [])
                bucket.extend(v for v in values if v not in bucket)
            logger.info(f"LLM dictionary {i + 1}/{len(params)}: {param.name} -> {len(values)} values")
        return dictionary


def prepare_llm_dictionary(config: LLMConfig, api: ApiModel,
                           output_path: Optional[str] = None) -> Dict[str, List[Any]]:
    """
    Dictionary for the LargeLanguageModelDictionary source, or empty when unavailable

    Args:
        config: LLM settings
        api: API under test
        output_path: Where to store a freshly built dictionary for reuse
    """
    provider = config.provider.lower()
    if provider == "none":
        return {}
    if provider == "file":
        return load_llm_dictionary(config.dictionary_path)

    try:
        dictionary = LLMDictionaryBuilder(config).build(api)
    except Exception as e:
        logger.warning(f"LLM dictionary disabled: {str(e)}")
        return {}
    if output_path and dictionary:
        save_llm_dictionary(output_path, dictionary)
        logger.info(f"LLM dictionary saved: {output_path}")
    return dictionary
