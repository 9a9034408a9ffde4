from .backward import ParamGradients, render_backward
from .forward import RenderOutput, render
from .projection import ProjectedGaussian, ProjectedGaussians, project
from .reference import render_reference

__all__ = ["ParamGradients", "ProjectedGaussian", "ProjectedGaussians",
           "RenderOutput", "project", "render", "render_backward",
           "render_reference"]
