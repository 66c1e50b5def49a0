import click


class RangedInt(click.ParamType):
    name = "integer"

    def __init__(self, min=None, max=None) -> None:
        self.min = min
        self.max = max

    def convert(self, value, param, ctx) -> int:
        try:
            value = int(value)
        except (TypeError, ValueError):
            self.fail('NaN', param, ctx)
        if self.min is not None and value < self.min:
            self.fail(f'number is below minimum: {self.min}', param, ctx)
        elif self.max is not None and value > self.max:
            self.fail(f'number is above maximum: {self.max}', param, ctx)
        return value


class OpenInterval(click.ParamType):
    """A float strictly between lo and hi."""
    name = "float"

    def __init__(self, lo=-1.0, hi=1.0) -> None:
        self.lo = lo
        self.hi = hi

    def convert(self, value, param, ctx) -> float:
        try:
            value = float(value)
        except (TypeError, ValueError):
            self.fail('NaN', param, ctx)
        if not self.lo < value < self.hi:
            self.fail(f'value must lie in ({self.lo}, {self.hi})', param, ctx)
        return value
