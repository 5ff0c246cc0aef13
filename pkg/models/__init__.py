from pydantic import ConfigDict, BaseModel


class BaseSchema(BaseModel):
    model_config = ConfigDict(
        populate_by_name=True,
        from_attributes=True,
        arbitrary_types_allowed=True,
        frozen=True,
    )
