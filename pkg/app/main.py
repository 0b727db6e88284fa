import uvicorn
from fastapi import FastAPI

from app.routers import cognition, evaluation, rules

# Создаём приложение FastAPI
app = FastAPI(
    title="Оценка когнитивной эффективности детекций",
    version="0.1.0",
)

app.include_router(rules.router)
app.include_router(cognition.router)
app.include_router(evaluation.router)


# Корневой эндпоинт для проверки
@app.get("/")
async def root():
    """
    Корневой маршрут, подтверждающий, что API работает.
    """
    return {"message": "Сервис оценки детекций работает"}


if __name__ == "__main__":
    uvicorn.run("app.main:app", reload=True)
