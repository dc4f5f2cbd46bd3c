import re
from typing import Dict, Tuple

from ._complexity import ComplexityScore, ImageDescription
from ._errors import ScoreParseError, ScoreRangeError

__all__ = ("PROMPT_TEMPLATE", "PERCEPTION_SENTENCES", "build_prompt", "parse_score",
           "format_score",)

PERCEPTION_SENTENCES: Dict[Tuple[bool, bool], str] = {
    (True, True): "There are text visible in the image. There are also facial details.",
    (True, False): "There are text visible in the image, but there is no human face.",
    (False, True): "There is no obvious text in the image, but there are facial details.",
    (False, False): "There is no text or human face in the image.",
}

PROMPT_TEMPLATE = "\n".join((
    "Given the description of a 512px image, determine its complexity based on the "
    "following factors:",
    "1. Number of distinct objects",
    "2. Color variance",
    "3. Texture complexity",
    "4. Foreground and background",
    "5. Symmetry and repetition",
    "6. Human perception factors, like the presence of human faces or text",
    "You will be given the caption, whether there are text or numbers, and whether there "
    "are faces in the image. Assign a complexity score such that a higher number means the "
    "image is more complex. Note that text and facial details are intrinsically complex "
    "because they are crucial to human perception. Here are some examples for scoring:",
    "- Score 1: A plane in a sky",
    "- Score 2: A t-shirt with a emoji on it",
    "- Score 3: A dog lying on the grass",
    "- Score 4: A woman skiing in the snow",
    "- Score 5: Two kids walking on the beach",
    "- Score 6: A dinning table full of food",
    "- Score 7: A close-up shot of a old man",
    "- Score 8: Many people gathering in the stadium",
    "- Score 9: Newspapers or graphs with text and numbers",
    "Now determine the complexity for the caption:",
    "{caption}",
    "{perception}",
    'Respond with "Score: ? out of 9", where "?" is a number between 1 and 9. '
    "Then provide explanations.",
))

_SCORE_PATTERN = re.compile(r"Score:\s*(-?\d+)\s+out of 9")


def build_prompt(desc: ImageDescription) -> str:
    perception = PERCEPTION_SENTENCES[(bool(desc.has_text), bool(desc.has_faces))]
    return PROMPT_TEMPLATE.format(caption=desc.caption, perception=perception)


def parse_score(response: str) -> ComplexityScore:
    """First ``Score: <int> out of 9`` in ``response``."""
    match = _SCORE_PATTERN.search(response)
    if match is None:
        raise ScoreParseError("no 'Score: ? out of 9' in response: {!r}".format(response[:80]))
    value = int(match.group(1))
    if not 1 <= value <= 9:
        raise ScoreRangeError("score {} outside 1..9".format(value))
    return ComplexityScore(value, response=response)


def format_score(value: int) -> str:
    return "Score: {} out of 9".format(value)
