from enum import Enum


class PrivacyLevel(str, Enum):
    """Neighbouring granularity: rank-one unit difference (priv1) or unit Frobenius difference (priv2)"""
    PRIV1 = "priv1"
    PRIV2 = "priv2"


class Mode(str, Enum):
    NON_PRIVATE = "nonprivate"
    PRIV1 = "priv1"
    PRIV2 = "priv2"

    @property
    def privacy_level(self) -> PrivacyLevel | None:
        if self is Mode.NON_PRIVATE:
            return None
        return PrivacyLevel(self.value)
