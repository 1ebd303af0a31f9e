from .apis import MockApiService, MockExternalApis
from .osn import MockOsn, MockOsnService

__all__ = ["MockApiService", "MockExternalApis", "MockOsn", "MockOsnService"]
