"""lesionlens: explanation bundle for dermoscopic lesion classification.

Clinical ABCD scores from image segmentation, GradCAM++ attention and its
alignment with the lesion, concept activation vectors, and MC-Dropout
uncertainty with reliability flagging.
"""

__version__ = "0.1.0"
